#include "cap/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "cap/error.hpp"

namespace cap::datastore {

namespace {

static_assert(std::endian::native == std::endian::little,
              "index files store little-endian floats; big-endian hosts need byte swapping");

constexpr int kFormatVersion = 1;
constexpr double kNormTolerance = 1e-6;

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < size ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < size ? data[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(triple >> 18) & 0x3F];
    out += kAlphabet[(triple >> 12) & 0x3F];
    out += i + 1 < size ? kAlphabet[(triple >> 6) & 0x3F] : '=';
    out += i + 2 < size ? kAlphabet[triple & 0x3F] : '=';
  }
  return out;
}

// Returns false on malformed input.
bool base64_decode(std::string_view text, std::vector<unsigned char>& out) {
  if (text.size() % 4 != 0) return false;
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  out.clear();
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    const int pad = (text[i + 3] == '=') + (text[i + 2] == '=');
    if (pad > 0 && !last) return false;
    if (text[i + 2] == '=' && text[i + 3] != '=') return false;
    std::uint32_t triple = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v = 0;
      if (c == '=' && k >= 4 - pad) {
        v = 0;
      } else {
        v = value(c);
        if (v < 0) return false;
      }
      triple = (triple << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<unsigned char>(triple >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(triple >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(triple));
  }
  return true;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

double norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

// Unbiased draw from [0, bound) on top of the standardized mt19937_64 stream,
// so samples do not depend on the standard library's distributions.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

void sort_hits(std::vector<Hit>& hits, std::size_t k) {
  const auto better = [](const Hit& a, const Hit& b) {
    return a.score != b.score ? a.score > b.score : a.entry->id < b.entry->id;
  };
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), better);
  hits.resize(take);
}

}  // namespace

std::vector<float> l2_normalize(std::span<const float> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorKind::InvalidArgument, "cannot normalize a zero or non-finite vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

DatastoreIndex DatastoreIndex::build(const std::vector<corpus::ParallelPair>& pairs,
                                     Embedder& embedder, std::size_t batch_size) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDatastore, "no pairs to index");
  if (batch_size == 0) batch_size = 1;
  std::vector<DatastoreEntry> entries;
  entries.reserve(pairs.size());
  std::size_t dim = 0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t stop = std::min(pairs.size(), start + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < stop; ++i) texts.push_back(pairs[i].src);
    auto vectors = embedder.embed(texts);
    if (vectors.size() != texts.size()) {
      throw Error(ErrorKind::IndexBuild, "embedder returned " + std::to_string(vectors.size()) +
                                             " vectors for " + std::to_string(texts.size()) + " texts");
    }
    for (std::size_t i = start; i < stop; ++i) {
      auto& v = vectors[i - start];
      if (dim == 0) dim = v.size();
      if (v.empty() || v.size() != dim) {
        throw Error(ErrorKind::IndexBuild, "embedding of pair " + std::to_string(i) + " has dimension " +
                                               std::to_string(v.size()) + ", expected " + std::to_string(dim));
      }
      std::vector<float> unit;
      try {
        unit = l2_normalize(v);
      } catch (const Error&) {
        throw Error(ErrorKind::IndexBuild, "embedding of pair " + std::to_string(i) + " cannot be normalized");
      }
      entries.push_back({static_cast<std::uint64_t>(i), pairs[i], std::move(unit)});
    }
  }
  return from_entries(std::move(entries), dim);
}

DatastoreIndex DatastoreIndex::from_entries(std::vector<DatastoreEntry> entries, std::size_t dim) {
  if (entries.empty()) throw Error(ErrorKind::EmptyDatastore, "no entries");
  if (dim == 0) throw Error(ErrorKind::IndexBuild, "dimension must be positive");
  DatastoreIndex index;
  index.dim_ = dim;
  for (std::size_t pos = 0; pos < entries.size(); ++pos) {
    const auto& e = entries[pos];
    if (e.embedding.size() != dim) {
      throw Error(ErrorKind::IndexBuild, "entry " + std::to_string(e.id) + " has dimension " +
                                             std::to_string(e.embedding.size()));
    }
    if (std::abs(norm(e.embedding) - 1.0) > kNormTolerance) {
      throw Error(ErrorKind::IndexBuild, "entry " + std::to_string(e.id) + " is not unit-norm");
    }
    if (!index.by_id_.emplace(e.id, pos).second) {
      throw Error(ErrorKind::IndexBuild, "duplicate id " + std::to_string(e.id));
    }
  }
  index.entries_ = std::move(entries);

  auto& stats = index.bm25_;
  std::size_t total = 0;
  for (const auto& e : index.entries_) {
    auto terms = corpus::tokenize_units(e.pair.src, e.pair.src_lang);
    std::unordered_map<std::string, std::uint32_t> counts;
    for (auto& t : terms) ++counts[t];
    for (const auto& [term, _] : counts) ++stats.doc_freq[term];
    stats.doc_lengths.push_back(terms.size());
    stats.term_counts.push_back(std::move(counts));
    total += terms.size();
  }
  stats.avg_length = static_cast<double>(total) / static_cast<double>(index.entries_.size());
  return index;
}

const DatastoreEntry* DatastoreIndex::find(std::uint64_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<Hit> DatastoreIndex::retrieve_similar(std::span<const float> query, std::size_t k) const {
  if (query.size() != dim_) {
    throw Error(ErrorKind::QueryDimension, "query has dimension " + std::to_string(query.size()) +
                                               ", index has " + std::to_string(dim_));
  }
  std::vector<Hit> hits;
  hits.reserve(entries_.size());
  for (const auto& e : entries_) hits.push_back({&e, dot(query, e.embedding)});
  sort_hits(hits, k);
  return hits;
}

std::vector<std::string> DatastoreIndex::query_terms(std::string_view text) const {
  return corpus::tokenize_units(text, entries_.front().pair.src_lang);
}

double DatastoreIndex::bm25_score(const std::vector<std::string>& query_terms,
                                  std::size_t position) const {
  const auto n = static_cast<double>(entries_.size());
  const auto& counts = bm25_.term_counts[position];
  const double length_norm =
      1.0 - kBm25B + kBm25B * static_cast<double>(bm25_.doc_lengths[position]) / bm25_.avg_length;
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto tf_it = counts.find(term);
    if (tf_it == counts.end()) continue;
    const auto df = static_cast<double>(bm25_.doc_freq.at(term));
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const auto tf = static_cast<double>(tf_it->second);
    score += idf * tf * (kBm25K1 + 1.0) / (tf + kBm25K1 * length_norm);
  }
  return score;
}

std::vector<Hit> DatastoreIndex::retrieve_bm25(std::string_view query, std::size_t k) const {
  const auto terms = query_terms(query);
  if (terms.empty()) throw Error(ErrorKind::InvalidArgument, "BM25 query is empty");
  std::vector<Hit> hits;
  hits.reserve(entries_.size());
  for (std::size_t pos = 0; pos < entries_.size(); ++pos) {
    hits.push_back({&entries_[pos], bm25_score(terms, pos)});
  }
  sort_hits(hits, k);
  return hits;
}

std::vector<Hit> DatastoreIndex::sample_random(std::size_t k, std::uint64_t seed) const {
  if (k > entries_.size()) {
    throw Error(ErrorKind::InsufficientEntries, "cannot sample " + std::to_string(k) + " of " +
                                                    std::to_string(entries_.size()) + " entries");
  }
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::vector<Hit> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(draw_below(rng, order.size() - i));
    std::swap(order[i], order[j]);
    out.push_back({&entries_[order[i]], 0.0});
  }
  return out;
}

void DatastoreIndex::save(std::ostream& out) const {
  nlohmann::json header = {{"format", "cap-datastore"}, {"version", kFormatVersion},
                           {"dim", dim_}, {"count", entries_.size()}};
  out << header.dump() << '\n';
  for (const auto& e : entries_) {
    nlohmann::json record = {
        {"id", e.id},
        {"src", e.pair.src},
        {"tgt", e.pair.tgt},
        {"src_lang", e.pair.src_lang},
        {"tgt_lang", e.pair.tgt_lang},
        {"embedding", base64_encode(reinterpret_cast<const unsigned char*>(e.embedding.data()),
                                    e.embedding.size() * sizeof(float))},
    };
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::IndexFormat, "write failed");
}

DatastoreIndex DatastoreIndex::load(std::istream& in) {
  std::uint64_t offset = 0;
  std::string line;
  auto next_line = [&](std::uint64_t& line_start) {
    line_start = offset;
    if (!std::getline(in, line)) return false;
    offset += line.size() + 1;
    return true;
  };
  auto parse = [&](std::uint64_t at) {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IndexFormatError(at + (e.byte > 0 ? e.byte - 1 : 0), "malformed JSON record");
    }
  };

  std::uint64_t at = 0;
  if (!next_line(at)) throw IndexFormatError(0, "missing header");
  const auto header = parse(at);
  std::size_t dim = 0;
  std::size_t count = 0;
  try {
    if (header.at("format").get<std::string>() != "cap-datastore") {
      throw IndexFormatError(at, "not a datastore index");
    }
    if (header.at("version").get<int>() != kFormatVersion) {
      throw IndexFormatError(at, "unsupported version " + header.at("version").dump());
    }
    dim = header.at("dim").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw IndexFormatError(at, "header lacks format/version/dim/count");
  }
  if (dim == 0) throw IndexFormatError(at, "declared dimension is 0");
  if (count == 0) throw IndexFormatError(at, "declared count is 0");

  std::vector<DatastoreEntry> entries;
  entries.reserve(count);
  std::vector<unsigned char> bytes;
  for (std::size_t n = 0; n < count; ++n) {
    if (!next_line(at)) {
      throw IndexFormatError(offset, "truncated: expected " + std::to_string(count) + " entries, found " +
                                         std::to_string(n));
    }
    const auto record = parse(at);
    DatastoreEntry e;
    std::string encoded;
    try {
      e.id = record.at("id").get<std::uint64_t>();
      e.pair.src = record.at("src").get<std::string>();
      e.pair.tgt = record.at("tgt").get<std::string>();
      e.pair.src_lang = record.at("src_lang").get<std::string>();
      e.pair.tgt_lang = record.at("tgt_lang").get<std::string>();
      encoded = record.at("embedding").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw IndexFormatError(at, "entry record is missing fields");
    }
    if (!base64_decode(encoded, bytes) || bytes.size() != dim * sizeof(float)) {
      throw IndexFormatError(at, "embedding is not " + std::to_string(dim) + " base64 float32 values");
    }
    e.embedding.resize(dim);
    std::memcpy(e.embedding.data(), bytes.data(), bytes.size());
    entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IndexFormatError(offset, "trailing data after " + std::to_string(count) + " entries");
  }
  try {
    return from_entries(std::move(entries), dim);
  } catch (const Error& e) {
    throw IndexFormatError(0, e.what());
  }
}

void DatastoreIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IndexFormat, "cannot open " + path.string() + " for writing");
  save(out);
}

DatastoreIndex DatastoreIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IndexFormat, "cannot open " + path.string());
  return load(in);
}

}  // namespace cap::datastore
