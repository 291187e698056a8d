#pragma once

#include "hedgeflow/dates.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hedgeflow {

enum class MemoryKind { MarketInformation, InvestmentReflection, GeneralExperience };

const char* to_string(MemoryKind k);
MemoryKind memory_kind_from_string(const std::string& s);

struct MemoryRecord {
    std::string id; // assigned by the store on insert if empty
    MemoryKind kind = MemoryKind::MarketInformation;
    Date timestamp;
    std::string text;
    std::vector<double> embedding;
    std::map<std::string, std::string> metadata;
};

struct Query {
    std::string text;
    std::vector<double> embedding;
    int k = 5;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Append-only store for one memory tier. Records never decay or get
/// rewritten; the engine clock (when set) rejects future-dated inserts.
class MemoryStore {
public:
    MemoryStore(MemoryKind kind, std::size_t dim);

    /// Returns the record id (assigned as "<prefix>-<counter>" when empty).
    const std::string& insert(MemoryRecord rec);

    void set_clock(Date d) { clock_ = d; }

    MemoryKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return records_.size(); }
    std::span<const MemoryRecord> records() const { return records_; }

    void save_jsonl(const std::string& path) const;
    static MemoryStore load_jsonl(const std::string& path, MemoryKind kind, std::size_t dim);

private:
    MemoryKind kind_;
    std::size_t dim_;
    std::optional<Date> clock_;
    std::vector<MemoryRecord> records_;
    std::uint64_t next_id_ = 1;
};

struct Retrieved {
    const MemoryRecord* record;
    double similarity;
};

/// Top-k across the union of the given stores, ranked by descending cosine
/// similarity; ties broken by newer timestamp, then lexicographic id.
/// `as_of` (the query's engine date) hides newer records when set.
std::vector<Retrieved> retrieve(std::span<const MemoryStore* const> stores, const Query& query,
                                std::optional<Date> as_of = std::nullopt);

/// Per-kind quota variant (off by default in the engine): reserves
/// ceil(k / stores) slots per store, fills any shortfall from the global
/// ranking, and returns the union re-ranked by similarity.
std::vector<Retrieved> retrieve_with_quota(std::span<const MemoryStore* const> stores,
                                           const Query& query,
                                           std::optional<Date> as_of = std::nullopt);

} // namespace hedgeflow
