#include "statviz/retrieval.hpp"

#include "statviz/error.hpp"
#include "statviz/util.hpp"

#include <json.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace statviz::retrieval {

namespace fs = std::filesystem;
using nlohmann::json;

EmbeddingVector embed(const std::string& text, EmbeddingProvider& provider) {
    if (text.empty()) {
        throw PreconditionError("cannot embed empty text");
    }
    auto out = provider.embed_batch({text});
    if (out.size() != 1) {
        throw EmbeddingError(fmt::format("provider {} returned {} vectors for 1 text", provider.id(), out.size()));
    }
    auto& v = out.front();
    if (v.dim() != provider.dim()) {
        throw EmbeddingError(fmt::format("provider {} returned dim {}, declared {}", provider.id(), v.dim(),
                                         provider.dim()));
    }
    if (!std::all_of(v.values.begin(), v.values.end(), [](double x) { return std::isfinite(x); })) {
        throw EmbeddingError("provider " + provider.id() + " returned a non-finite value");
    }
    return std::move(v);
}

// --- hashing provider -------------------------------------------------------

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) {
        throw PreconditionError("embedding dimension must be positive");
    }
}

std::string HashingEmbeddingProvider::id() const {
    return fmt::format("hash-v1/{}", dim_);
}

namespace {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(c);
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

void add_feature(std::vector<double>& v, std::string_view feature, double weight) {
    auto h = util::fnv1a64(feature);
    auto bucket = static_cast<std::size_t>(h % v.size());
    double sign = ((h >> 63) & 1U) ? -1.0 : 1.0;
    v[bucket] += sign * weight;
}

} // namespace

std::vector<EmbeddingVector> HashingEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto tokens = tokenize(text);
        if (tokens.empty()) {
            throw EmbeddingError("text has no alphanumeric tokens: '" + text + "'");
        }
        std::vector<double> v(dim_, 0.0);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            add_feature(v, tokens[i], 1.0);
            if (i + 1 < tokens.size()) {
                add_feature(v, tokens[i] + ' ' + tokens[i + 1], 0.5);
            }
        }
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
            // Opposite-sign collisions cancelled everything out.
            v[util::fnv1a64(tokens.front()) % dim_] = 1.0;
        }
        out.push_back({std::move(v)});
    }
    return out;
}

// --- precomputed provider ---------------------------------------------------

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(std::string provider_id, std::size_t dim,
                                                           std::unordered_map<std::string, EmbeddingVector> table)
    : id_(std::move(provider_id)), dim_(dim), table_(std::move(table)) {
    for (const auto& [text, v] : table_) {
        if (v.dim() != dim_) {
            throw ValidationError(fmt::format("precomputed vector for '{}' has dim {}, expected {}", text, v.dim(), dim_));
        }
    }
}

PrecomputedEmbeddingProvider PrecomputedEmbeddingProvider::from_file(const fs::path& path) {
    try {
        auto j = json::parse(util::read_file(path));
        std::unordered_map<std::string, EmbeddingVector> table;
        for (const auto& [text, values] : j.at("vectors").items()) {
            table.emplace(text, EmbeddingVector{values.get<std::vector<double>>()});
        }
        return {j.at("provider_id").get<std::string>(), j.at("dim").get<std::size_t>(), std::move(table)};
    } catch (const json::exception& e) {
        throw ParseError("bad precomputed embedding file " + path.string(), e.what());
    }
}

std::vector<EmbeddingVector> PrecomputedEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto it = table_.find(text);
        if (it == table_.end()) {
            throw EmbeddingError(fmt::format("provider {} has no vector for '{}'", id_, text.substr(0, 80)));
        }
        out.push_back(it->second);
    }
    return out;
}

// --- http provider ----------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(Options options, std::shared_ptr<http::Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
    if (options_.endpoint.empty()) {
        throw PreconditionError("embedding endpoint is not configured");
    }
    if (options_.batch_size == 0) {
        options_.batch_size = 1;
    }
}

std::string HttpEmbeddingProvider::id() const {
    return fmt::format("http:{}/{}", options_.model.empty() ? options_.endpoint : options_.model, options_.dim);
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    http::Headers headers{{"Content-Type", "application/json"}};
    if (!options_.api_key.empty()) {
        headers["Authorization"] = "Bearer " + options_.api_key;
    }
    for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
        auto end = std::min(texts.size(), start + options_.batch_size);
        json request;
        request["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                    texts.begin() + static_cast<std::ptrdiff_t>(end));
        if (!options_.model.empty()) {
            request["model"] = options_.model;
        }
        http::Response response;
        try {
            response = transport_->post(options_.endpoint, request.dump(), headers);
        } catch (const TransportError& e) {
            throw EmbeddingError(std::string("embedding provider unavailable: ") + e.what());
        }
        if (response.status != 200) {
            throw EmbeddingError(fmt::format("embedding service returned HTTP {}", response.status));
        }
        try {
            auto j = json::parse(response.body);
            const auto& vectors = j.at("vectors");
            if (vectors.size() != end - start) {
                throw EmbeddingError(fmt::format("embedding service returned {} vectors for {} texts",
                                                 vectors.size(), end - start));
            }
            for (const auto& v : vectors) {
                out.push_back({v.get<std::vector<double>>()});
            }
        } catch (const json::exception& e) {
            throw ParseError("bad embedding response", response.body.substr(0, 200));
        }
    }
    return out;
}

// --- similarity and index ---------------------------------------------------

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw PreconditionError(fmt::format("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    if (a.dim() == 0) {
        throw PreconditionError("cosine of empty vectors");
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0 || nb == 0) {
        throw PreconditionError("cosine similarity with a zero vector");
    }
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

RetrievalIndex::RetrievalIndex(std::string provider_id, std::size_t dim, std::vector<IndexEntry> entries)
    : provider_id_(std::move(provider_id)), dim_(dim), entries_(std::move(entries)) {
    std::set<TableRef> seen;
    for (const auto& e : entries_) {
        if (!seen.insert(e.ref).second) {
            throw ValidationError("duplicate table in index: " + e.ref.id());
        }
        if (e.vector.dim() != dim_) {
            throw ValidationError(fmt::format("index entry {} has dim {}, expected {}", e.ref.id(), e.vector.dim(), dim_));
        }
    }
}

std::vector<RankedMatch> RetrievalIndex::rank(const EmbeddingVector& query, std::size_t k) const {
    if (entries_.empty()) {
        throw PreconditionError("cannot query an empty index");
    }
    if (k == 0) {
        throw PreconditionError("k must be positive");
    }
    std::vector<RankedMatch> scored;
    scored.reserve(entries_.size());
    for (const auto& e : entries_) {
        scored.push_back({e.ref, cosine_similarity(query, e.vector), 0});
    }
    auto better = [](const RankedMatch& x, const RankedMatch& y) {
        if (x.score != y.score) {
            return x.score > y.score;
        }
        return x.ref < y.ref;
    };
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
    scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    for (std::size_t i = 0; i < k; ++i) {
        scored[i].rank = static_cast<int>(i + 1);
    }
    return scored;
}

namespace {
constexpr const char* kIndexFormat = "statviz-index/1";
}

void RetrievalIndex::save(const fs::path& dir) const {
    static_assert(std::endian::native == std::endian::little, "vector file is little-endian");
    fs::create_directories(dir);
    std::string entries_text;
    std::string vectors(entries_.size() * dim_ * sizeof(double), '\0');
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        entries_text += json{{"ref", entries_[i].ref.id()}, {"text", entries_[i].text}}.dump() + "\n";
        std::memcpy(vectors.data() + i * dim_ * sizeof(double), entries_[i].vector.values.data(), dim_ * sizeof(double));
    }
    util::write_file_atomic(dir / "entries.jsonl", entries_text);
    util::write_file_atomic(dir / "vectors.f64", vectors);
    json manifest{{"format", kIndexFormat},
                  {"provider_id", provider_id_},
                  {"dim", dim_},
                  {"count", entries_.size()},
                  {"text_fields", "title + \". \" + description"},
                  {"entries_file", "entries.jsonl"},
                  {"vector_file", "vectors.f64"},
                  {"vector_encoding", "float64 little-endian, row-major, one row per entry"}};
    // Manifest last: a readable manifest implies complete companion files.
    util::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

RetrievalIndex RetrievalIndex::load(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) {
        throw NotFoundError("no index manifest in " + dir.string());
    }
    json manifest;
    try {
        manifest = json::parse(util::read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ParseError("bad index manifest", e.what());
    }
    if (manifest.value("format", "") != kIndexFormat) {
        throw ParseError("unsupported index format", manifest.value("format", ""));
    }
    auto dim = manifest.at("dim").get<std::size_t>();
    auto count = manifest.at("count").get<std::size_t>();
    auto lines = util::split_lines(util::read_file(dir / manifest.value("entries_file", "entries.jsonl")));
    auto vectors = util::read_file(dir / manifest.value("vector_file", "vectors.f64"));
    if (lines.size() != count || vectors.size() != count * dim * sizeof(double)) {
        throw ParseError("index files disagree with manifest", dir.string());
    }
    std::vector<IndexEntry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto j = json::parse(lines[i]);
        std::vector<double> v(dim);
        std::memcpy(v.data(), vectors.data() + i * dim * sizeof(double), dim * sizeof(double));
        entries.push_back({TableRef(j.at("ref").get<std::string>()), j.at("text").get<std::string>(), {std::move(v)}});
    }
    return {manifest.at("provider_id").get<std::string>(), dim, std::move(entries)};
}

RetrievalIndex build_index(const std::vector<catalog::TableMetadata>& catalog, EmbeddingProvider& provider) {
    if (catalog.empty()) {
        throw PreconditionError("cannot build an index from an empty catalog");
    }
    std::set<TableRef> seen;
    std::vector<std::string> texts;
    for (const auto& meta : catalog) {
        if (!seen.insert(meta.ref).second) {
            throw ValidationError("duplicate table in catalog: " + meta.ref.id());
        }
        texts.push_back(meta.retrieval_text());
    }
    auto vectors = provider.embed_batch(texts);
    if (vectors.size() != texts.size()) {
        throw EmbeddingError("provider returned the wrong number of vectors");
    }
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (vectors[i].dim() != provider.dim()) {
            throw EmbeddingError("provider returned a vector of the wrong dimension");
        }
        entries.push_back({catalog[i].ref, texts[i], std::move(vectors[i])});
    }
    return {provider.id(), provider.dim(), std::move(entries)};
}

std::vector<RankedMatch> query(const RetrievalIndex& index, const std::string& prompt, std::size_t k,
                               EmbeddingProvider& provider) {
    if (provider.id() != index.provider_id()) {
        throw PreconditionError(fmt::format("index was built with provider '{}', query uses '{}'",
                                            index.provider_id(), provider.id()));
    }
    return index.rank(embed(prompt, provider), k);
}

HitRates exact_match_at_k(const std::map<std::string, int>& gold_ranks, const std::vector<int>& ks) {
    if (gold_ranks.empty()) {
        throw PreconditionError("no rankings to score");
    }
    for (const auto& [q, r] : gold_ranks) {
        if (r < 1) {
            throw PreconditionError(fmt::format("gold rank for '{}' must be >= 1, got {}", q, r));
        }
    }
    HitRates out;
    out.n_queries = gold_ranks.size();
    for (int k : ks) {
        if (k < 1) {
            throw PreconditionError("k must be positive");
        }
        std::size_t hits = 0;
        for (const auto& [q, r] : gold_ranks) {
            hits += r <= k ? 1 : 0;
        }
        out.hits_at[k] = static_cast<double>(hits) / static_cast<double>(out.n_queries);
    }
    return out;
}

int gold_rank(const std::vector<RankedMatch>& ranking, const TableRef& gold) {
    for (const auto& m : ranking) {
        if (m.ref == gold) {
            return m.rank;
        }
    }
    return 0;
}

} // namespace statviz::retrieval
