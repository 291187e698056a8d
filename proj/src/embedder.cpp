#include "hedgeflow/embedder.hpp"

#include "hedgeflow/errors.hpp"

#include <cctype>
#include <cmath>

namespace hedgeflow {

namespace {

std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ValidationError("embedder dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(const std::string& text) {
    if (text.empty()) throw ValidationError("cannot embed empty text");
    std::vector<double> v(dim_, 0.0);

    std::string token;
    const auto flush = [&] {
        if (token.empty()) return;
        const std::uint64_t h = fnv1a64(token, seed_);
        const std::size_t bucket = static_cast<std::size_t>(h % dim_);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        v[bucket] += sign;
        // Bigram-ish spill into a second bucket to reduce collisions.
        const std::size_t bucket2 = static_cast<std::size_t>((h >> 7) % dim_);
        v[bucket2] += 0.5 * sign;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
        else flush();
    }
    flush();

    double norm2 = 0;
    for (double x : v) norm2 += x * x;
    if (norm2 == 0) {
        // Text with no alphanumeric tokens: fall back to a whole-string hash.
        const std::uint64_t h = fnv1a64(text, seed_);
        v[h % dim_] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

} // namespace hedgeflow
