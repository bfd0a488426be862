#pragma once

#include "statviz/catalog.hpp"
#include "statviz/http.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace statviz::retrieval {

using catalog::TableRef;

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

class EmbeddingError : public Error {
public:
    using Error::Error;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    // Stable identifier recorded in the index manifest, e.g. "hash-v1/256".
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
};

// Embeds one text, checking the result is finite and of the declared width.
EmbeddingVector embed(const std::string& text, EmbeddingProvider& provider);

// Deterministic bag-of-tokens provider: lowercased alphanumeric tokens and
// token bigrams are hashed into signed buckets. Needs no model or network.
class HashingEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(std::size_t dim = 256);
    std::string id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
};

// Looks vectors up in a table prepared offline, e.g. by running a sentence
// encoder over the catalog and the task prompts. File format:
//   {"provider_id": "...", "dim": N, "vectors": {"<text>": [..], ...}}
class PrecomputedEmbeddingProvider final : public EmbeddingProvider {
public:
    PrecomputedEmbeddingProvider(std::string provider_id, std::size_t dim,
                                 std::unordered_map<std::string, EmbeddingVector> table);
    static PrecomputedEmbeddingProvider from_file(const std::filesystem::path& path);

    std::string id() const override { return id_; }
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

private:
    std::string id_;
    std::size_t dim_;
    std::unordered_map<std::string, EmbeddingVector> table_;
};

// Remote embedding service: POST {"texts": [...]} -> {"vectors": [[...]]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    struct Options {
        std::string endpoint;
        std::string model;  // becomes part of id()
        std::size_t dim = 768;
        std::string api_key;  // sent as a bearer token when non-empty
        std::size_t batch_size = 64;
    };

    HttpEmbeddingProvider(Options options, std::shared_ptr<http::Transport> transport);
    std::string id() const override;
    std::size_t dim() const override { return options_.dim; }
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

private:
    Options options_;
    std::shared_ptr<http::Transport> transport_;
};

// dot(a, b) / (|a| |b|). Throws on dimension mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct IndexEntry {
    TableRef ref;
    std::string text;
    EmbeddingVector vector;

    bool operator==(const IndexEntry&) const = default;
};

struct RankedMatch {
    TableRef ref;
    double score = 0;
    int rank = 0;

    bool operator==(const RankedMatch&) const = default;
};

class RetrievalIndex {
public:
    RetrievalIndex(std::string provider_id, std::size_t dim, std::vector<IndexEntry> entries);

    const std::string& provider_id() const noexcept { return provider_id_; }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    // Top-k by cosine, descending, ties broken by ascending ref. k larger
    // than the index returns every entry.
    std::vector<RankedMatch> rank(const EmbeddingVector& query, std::size_t k) const;

    // Writes manifest.json, entries.jsonl and vectors.f64 into dir.
    void save(const std::filesystem::path& dir) const;
    static RetrievalIndex load(const std::filesystem::path& dir);

    bool operator==(const RetrievalIndex&) const = default;

private:
    std::string provider_id_;
    std::size_t dim_;
    std::vector<IndexEntry> entries_;
};

RetrievalIndex build_index(const std::vector<catalog::TableMetadata>& catalog, EmbeddingProvider& provider);

std::vector<RankedMatch> query(const RetrievalIndex& index, const std::string& prompt, std::size_t k,
                               EmbeddingProvider& provider);

struct HitRates {
    std::size_t n_queries = 0;
    std::map<int, double> hits_at;
};

// gold_ranks maps query id -> 1-based rank of the gold table (use a large
// number when it was not retrieved at all).
HitRates exact_match_at_k(const std::map<std::string, int>& gold_ranks, const std::vector<int>& ks);

// 1-based position of `gold` in a full ranking, or 0 when absent.
int gold_rank(const std::vector<RankedMatch>& ranking, const TableRef& gold);

} // namespace statviz::retrieval
