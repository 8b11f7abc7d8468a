#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cap/capabilities.hpp"
#include "cap/corpus.hpp"

namespace cap::datastore {

struct DatastoreEntry {
  std::uint64_t id = 0;
  corpus::ParallelPair pair;
  std::vector<float> embedding;  // unit L2 norm, embedded from pair.src

  friend bool operator==(const DatastoreEntry&, const DatastoreEntry&) = default;
};

// Okapi BM25 statistics over the source side of every entry.
struct Bm25Stats {
  std::unordered_map<std::string, std::size_t> doc_freq;
  std::vector<std::unordered_map<std::string, std::uint32_t>> term_counts;
  std::vector<std::size_t> doc_lengths;
  double avg_length = 0.0;

  friend bool operator==(const Bm25Stats&, const Bm25Stats&) = default;
};

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

struct Hit {
  const DatastoreEntry* entry = nullptr;
  double score = 0.0;
};

// Returns v / ||v||. Throws InvalidArgument for a zero or non-finite vector.
std::vector<float> l2_normalize(std::span<const float> v);

// An immutable parallel-pair store searched by exhaustive scan.
class DatastoreIndex {
 public:
  // Embeds the source side of every pair in batches and L2-normalizes.
  static DatastoreIndex build(const std::vector<corpus::ParallelPair>& pairs, Embedder& embedder,
                              std::size_t batch_size = 64);
  // Validates entries (shared dimension, unit norm, unique ids) and derives BM25 statistics.
  static DatastoreIndex from_entries(std::vector<DatastoreEntry> entries, std::size_t dim);

  const std::vector<DatastoreEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t dim() const { return dim_; }
  const Bm25Stats& bm25_stats() const { return bm25_; }
  const DatastoreEntry* find(std::uint64_t id) const;

  // Top-k by cosine similarity (dot product of unit vectors), descending,
  // ties by ascending id. k larger than the index returns everything.
  std::vector<Hit> retrieve_similar(std::span<const float> query, std::size_t k) const;

  // Top-k by BM25 over source sides, descending, ties by ascending id.
  std::vector<Hit> retrieve_bm25(std::string_view query, std::size_t k) const;
  double bm25_score(const std::vector<std::string>& query_terms, std::size_t position) const;

  // k distinct entries drawn uniformly; fully determined by `seed`.
  std::vector<Hit> sample_random(std::size_t k, std::uint64_t seed) const;

  void save(std::ostream& out) const;
  static DatastoreIndex load(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static DatastoreIndex load(const std::filesystem::path& path);

  friend bool operator==(const DatastoreIndex&, const DatastoreIndex&) = default;

 private:
  DatastoreIndex() = default;
  std::vector<std::string> query_terms(std::string_view text) const;

  std::vector<DatastoreEntry> entries_;
  std::size_t dim_ = 0;
  Bm25Stats bm25_;
  std::unordered_map<std::uint64_t, std::size_t> by_id_;
};

}  // namespace cap::datastore
