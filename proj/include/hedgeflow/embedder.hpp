#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hedgeflow {

/// Text -> unit-norm vector. Implementations must be deterministic for a
/// fixed backend so replayed runs reproduce retrieval exactly.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::size_t dim() const = 0;
};

/// Offline embedder: seeded token hashing into a fixed-dimension vector,
/// L2-normalized. No semantics, but deterministic and collision-spread —
/// enough for tests and rule-mode runs.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 64, std::uint64_t seed = 0x9e3779b97f4a7c15ull);

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

} // namespace hedgeflow
