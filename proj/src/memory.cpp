#include "hedgeflow/memory.hpp"

#include "hedgeflow/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace hedgeflow {

using nlohmann::json;

const char* to_string(MemoryKind k) {
    switch (k) {
        case MemoryKind::MarketInformation: return "market_information";
        case MemoryKind::InvestmentReflection: return "investment_reflection";
        case MemoryKind::GeneralExperience: return "general_experience";
    }
    return "?";
}

MemoryKind memory_kind_from_string(const std::string& s) {
    if (s == "market_information") return MemoryKind::MarketInformation;
    if (s == "investment_reflection") return MemoryKind::InvestmentReflection;
    if (s == "general_experience") return MemoryKind::GeneralExperience;
    throw ValidationError("unknown memory kind '" + s + "'");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

const char* id_prefix(MemoryKind k) {
    switch (k) {
        case MemoryKind::MarketInformation: return "mi";
        case MemoryKind::InvestmentReflection: return "ir";
        case MemoryKind::GeneralExperience: return "ge";
    }
    return "mm";
}

} // namespace

MemoryStore::MemoryStore(MemoryKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
    if (dim_ == 0) throw ValidationError("memory store dimension must be positive");
}

const std::string& MemoryStore::insert(MemoryRecord rec) {
    if (rec.embedding.size() != dim_) {
        throw ValidationError("memory insert: embedding dimension " +
                              std::to_string(rec.embedding.size()) + " does not match store " +
                              std::to_string(dim_));
    }
    if (clock_ && rec.timestamp > *clock_) {
        throw ValidationError("memory insert: record dated " + rec.timestamp.to_string() +
                              " is after the engine clock " + clock_->to_string());
    }
    rec.kind = kind_;
    if (rec.id.empty()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s-%06llu", id_prefix(kind_),
                      static_cast<unsigned long long>(next_id_));
        rec.id = buf;
    }
    ++next_id_;
    records_.push_back(std::move(rec));
    return records_.back().id;
}

void MemoryStore::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const auto& r : records_) {
        json obj = {
            {"id", r.id},
            {"kind", to_string(r.kind)},
            {"timestamp", r.timestamp.to_string()},
            {"text", r.text},
            {"embedding", r.embedding},
            {"metadata", r.metadata},
        };
        out << obj.dump() << "\n";
    }
}

MemoryStore MemoryStore::load_jsonl(const std::string& path, MemoryKind kind, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    MemoryStore store(kind, dim);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        MemoryRecord rec;
        rec.id = obj.at("id").get<std::string>();
        rec.kind = memory_kind_from_string(obj.at("kind").get<std::string>());
        rec.timestamp = Date::parse(obj.at("timestamp").get<std::string>());
        rec.text = obj.at("text").get<std::string>();
        rec.embedding = obj.at("embedding").get<std::vector<double>>();
        if (obj.contains("metadata")) {
            rec.metadata = obj.at("metadata").get<std::map<std::string, std::string>>();
        }
        store.insert(std::move(rec));
    }
    return store;
}

namespace {

bool ranks_before(const Retrieved& a, const Retrieved& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.record->timestamp != b.record->timestamp) {
        return a.record->timestamp > b.record->timestamp;
    }
    return a.record->id < b.record->id;
}

std::vector<Retrieved> score_store(const MemoryStore& store, const Query& query,
                                   std::optional<Date> as_of) {
    if (query.embedding.size() != store.dim()) {
        throw ValidationError("retrieve: query dimension " +
                              std::to_string(query.embedding.size()) + " does not match store " +
                              std::to_string(store.dim()));
    }
    std::vector<Retrieved> scored;
    for (const auto& rec : store.records()) {
        if (as_of && rec.timestamp > *as_of) continue;
        scored.push_back({&rec, cosine_similarity(query.embedding, rec.embedding)});
    }
    return scored;
}

} // namespace

std::vector<Retrieved> retrieve(std::span<const MemoryStore* const> stores, const Query& query,
                                std::optional<Date> as_of) {
    if (query.k < 1) throw ValidationError("retrieve: k must be >= 1");
    std::vector<Retrieved> scored;
    for (const MemoryStore* store : stores) {
        if (!store || store->size() == 0) continue;
        const auto part = score_store(*store, query, as_of);
        scored.insert(scored.end(), part.begin(), part.end());
    }
    std::sort(scored.begin(), scored.end(), ranks_before);
    if (scored.size() > static_cast<std::size_t>(query.k)) {
        scored.resize(static_cast<std::size_t>(query.k));
    }
    return scored;
}

std::vector<Retrieved> retrieve_with_quota(std::span<const MemoryStore* const> stores,
                                           const Query& query, std::optional<Date> as_of) {
    if (query.k < 1) throw ValidationError("retrieve: k must be >= 1");
    std::size_t live = 0;
    for (const MemoryStore* s : stores) live += (s && s->size() > 0) ? 1 : 0;
    if (live == 0) return {};
    const std::size_t quota =
        (static_cast<std::size_t>(query.k) + live - 1) / live;

    std::vector<Retrieved> picked;
    std::vector<Retrieved> leftovers;
    for (const MemoryStore* store : stores) {
        if (!store || store->size() == 0) continue;
        auto part = score_store(*store, query, as_of);
        std::sort(part.begin(), part.end(), ranks_before);
        for (std::size_t i = 0; i < part.size(); ++i) {
            (i < quota ? picked : leftovers).push_back(part[i]);
        }
    }
    std::sort(picked.begin(), picked.end(), ranks_before);
    if (picked.size() > static_cast<std::size_t>(query.k)) {
        picked.resize(static_cast<std::size_t>(query.k));
    } else if (picked.size() < static_cast<std::size_t>(query.k) && !leftovers.empty()) {
        // fill the shortfall from the global ranking
        std::sort(leftovers.begin(), leftovers.end(), ranks_before);
        for (const auto& r : leftovers) {
            if (picked.size() >= static_cast<std::size_t>(query.k)) break;
            picked.push_back(r);
        }
        std::sort(picked.begin(), picked.end(), ranks_before);
    }
    return picked;
}

} // namespace hedgeflow
