#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pcr/lexical.hpp"
#include "pcr/ranked_list.hpp"

namespace pcr {

using Embedding = std::vector<float>;

/// Maps texts to fixed-dimension vectors. Implementations must be deterministic.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;
};

/// Feature-hashes token counts (FNV-1a of each token, modulo the dimension)
/// and L2-normalises. Texts without tokens map to the zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 768, Bm25Config tokenizer = {});

  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return "hashing"; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dimension_;
  Bm25Config tokenizer_;
};

struct EmbedOptions {
  std::size_t max_chars = 60000;
};

struct EmbedBatch {
  std::vector<Embedding> vectors;
  std::vector<std::size_t> truncated;     // input positions cut to max_chars
  std::vector<std::size_t> zero_vectors;  // positions that embedded to all zeros
};

/// Truncates each text to `options.max_chars` code points, then embeds.
/// Output order and length match the input.
EmbedBatch embed_texts(std::span<const std::string> texts, const Embedder& embedder,
                       const EmbedOptions& options = {});

/// Euclidean distance, accumulated in double.
double l2_distance(std::span<const float> a, std::span<const float> b);

/// Exact L2 search over every stored vector.
class FlatIndex {
 public:
  FlatIndex() = default;

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::span<const std::string> ids() const noexcept { return ids_; }
  std::span<const float> vector(std::size_t ordinal) const {
    return {data_.data() + ordinal * dimension_, dimension_};
  }

 private:
  friend FlatIndex build_flat(const std::map<std::string, Embedding>& embeddings);
  friend class IvfFlatIndex;

  std::size_t dimension_ = 0;
  std::vector<std::string> ids_;  // ascending
  std::vector<float> data_;       // row-major, size() x dimension()
};

/// Throws ValidationError naming the first id whose dimension differs.
FlatIndex build_flat(const std::map<std::string, Embedding>& embeddings);

/// Ascending distance (score = -distance), ties by ascending doc id;
/// min(top_k, n) entries.
RankedList search_flat(const FlatIndex& index, std::span<const float> query, std::size_t top_k,
                       std::string query_id = {});

struct IvfParams {
  std::size_t nlist = 0;  // 0 selects min(2048, ceil(sqrt(n)))
  std::size_t kmeans_iters = 10;
  std::uint64_t seed = 0;

  static std::size_t auto_nlist(std::size_t n_vectors);
};

struct SearchParams {
  std::size_t nprobe = 0;  // 0 selects ceil(nlist / 16)
  std::size_t top_k = 10;

  static std::size_t default_nprobe(std::size_t nlist);
};

/// Inverted file over k-means cells with uncompressed vectors.
class IvfFlatIndex {
 public:
  IvfFlatIndex() = default;

  std::size_t dimension() const noexcept { return flat_.dimension(); }
  std::size_t size() const noexcept { return flat_.size(); }
  std::size_t nlist() const noexcept { return cells_.size(); }
  std::size_t requested_nlist() const noexcept { return requested_nlist_; }
  bool nlist_clamped() const noexcept { return requested_nlist_ > cells_.size(); }
  const IvfParams& params() const noexcept { return params_; }

  const FlatIndex& flat() const noexcept { return flat_; }
  std::span<const float> centroid(std::size_t cell) const {
    return {centroids_.data() + cell * dimension(), dimension()};
  }
  /// Ordinals (into flat().ids()) of the vectors in `cell`, ascending.
  const std::vector<std::uint32_t>& cell(std::size_t c) const { return cells_.at(c); }
  std::size_t cell_of(std::size_t ordinal) const { return assignment_.at(ordinal); }

  /// Native-endian binary format; see save() for the layout.
  void save(std::ostream& out) const;
  static IvfFlatIndex load(std::istream& in);

 private:
  friend IvfFlatIndex build_ivf(const std::map<std::string, Embedding>&, const IvfParams&);

  FlatIndex flat_;
  IvfParams params_;
  std::size_t requested_nlist_ = 0;
  std::vector<float> centroids_;
  std::vector<std::uint32_t> assignment_;
  std::vector<std::vector<std::uint32_t>> cells_;
};

/// Lloyd's k-means seeded by sampling distinct vectors; empty cells are
/// re-seeded from the farthest member of the largest cell. nlist is clamped
/// to the number of vectors. Deterministic for a fixed seed.
IvfFlatIndex build_ivf(const std::map<std::string, Embedding>& embeddings,
                       const IvfParams& params);

/// Scans the nprobe cells whose centroids are nearest to `query` and ranks
/// their members exactly. Throws ValidationError when nprobe is out of range.
RankedList search_ivf(const IvfFlatIndex& index, std::span<const float> query,
                      const SearchParams& params, std::string query_id = {});

}  // namespace pcr
