#include "pcr/vector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "pcr/error.hpp"
#include "pcr/text.hpp"

namespace pcr {

HashingEmbedder::HashingEmbedder(std::size_t dimension, Bm25Config tokenizer)
    : dimension_(dimension), tokenizer_(std::move(tokenizer)) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be >= 1");
}

std::vector<Embedding> HashingEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  std::vector<double> acc(dimension_);
  for (const auto& t : texts) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& tok : tokenize(t, tokenizer_)) acc[text::fnv1a64(tok) % dimension_] += 1.0;
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    Embedding e(dimension_, 0.0f);
    if (norm > 0.0) {
      for (std::size_t i = 0; i < dimension_; ++i) e[i] = static_cast<float>(acc[i] / norm);
    }
    out.push_back(std::move(e));
  }
  return out;
}

EmbedBatch embed_texts(std::span<const std::string> texts, const Embedder& embedder,
                       const EmbedOptions& options) {
  EmbedBatch batch;
  std::vector<std::string> inputs;
  inputs.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::string cut = text::truncate_chars(texts[i], options.max_chars);
    if (cut.size() != texts[i].size()) batch.truncated.push_back(i);
    inputs.push_back(std::move(cut));
  }
  batch.vectors = embedder.embed(inputs);
  if (batch.vectors.size() != inputs.size()) {
    throw TransportError("embedder returned " + std::to_string(batch.vectors.size()) +
                         " vectors for " + std::to_string(inputs.size()) + " texts");
  }
  for (std::size_t i = 0; i < batch.vectors.size(); ++i) {
    const auto& v = batch.vectors[i];
    if (v.size() != embedder.dimension()) {
      throw TransportError("embedder returned dimension " + std::to_string(v.size()) +
                           ", expected " + std::to_string(embedder.dimension()));
    }
    if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) {
      batch.zero_vectors.push_back(i);
    }
  }
  return batch;
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

// ---------------------------------------------------------------------------
// Flat

FlatIndex build_flat(const std::map<std::string, Embedding>& embeddings) {
  FlatIndex index;
  if (embeddings.empty()) return index;
  index.dimension_ = embeddings.begin()->second.size();
  if (index.dimension_ == 0) throw ValidationError("embedding dimension must be >= 1");
  index.ids_.reserve(embeddings.size());
  index.data_.reserve(embeddings.size() * index.dimension_);
  for (const auto& [id, vec] : embeddings) {
    if (vec.size() != index.dimension_) {
      throw ValidationError("embedding '" + id + "' has dimension " + std::to_string(vec.size()) +
                            ", expected " + std::to_string(index.dimension_));
    }
    if (!std::all_of(vec.begin(), vec.end(), [](float x) { return std::isfinite(x); })) {
      throw ValidationError("embedding '" + id + "' has non-finite entries");
    }
    index.ids_.push_back(id);
    index.data_.insert(index.data_.end(), vec.begin(), vec.end());
  }
  return index;
}

namespace {

struct Hit {
  double distance;
  std::uint32_t ordinal;

  bool operator<(const Hit& o) const {
    return distance != o.distance ? distance < o.distance : ordinal < o.ordinal;
  }
};

void check_query(std::size_t dimension, std::span<const float> query) {
  if (query.size() != dimension) {
    throw ValidationError("query dimension " + std::to_string(query.size()) +
                          " does not match index dimension " + std::to_string(dimension));
  }
}

/// Ids ascend with ordinals, so ordering by ordinal breaks ties by doc id.
RankedList to_ranked(std::vector<Hit> hits, std::size_t top_k, const FlatIndex& flat,
                     std::string query_id) {
  const std::size_t k = std::min(top_k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end());
  RankedList list{std::move(query_id), ListSource::kVector, {}};
  list.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    list.entries.push_back({flat.ids()[hits[i].ordinal], i + 1, -hits[i].distance});
  }
  return list;
}

}  // namespace

RankedList search_flat(const FlatIndex& index, std::span<const float> query, std::size_t top_k,
                       std::string query_id) {
  if (top_k == 0) throw ValidationError("top_k must be >= 1");
  if (index.size() == 0) return {std::move(query_id), ListSource::kVector, {}};
  check_query(index.dimension(), query);
  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (std::uint32_t i = 0; i < index.size(); ++i) {
    hits.push_back({l2_distance(query, index.vector(i)), i});
  }
  return to_ranked(std::move(hits), top_k, index, std::move(query_id));
}

// ---------------------------------------------------------------------------
// IVF

std::size_t IvfParams::auto_nlist(std::size_t n_vectors) {
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_vectors))));
  return std::max<std::size_t>(1, std::min<std::size_t>(2048, root));
}

std::size_t SearchParams::default_nprobe(std::size_t nlist) {
  return std::max<std::size_t>(1, (nlist + 15) / 16);
}

namespace {

struct KMeans {
  const FlatIndex& flat;
  std::size_t nlist;
  std::vector<float> centroids;
  std::vector<std::uint32_t> assignment;

  std::span<const float> centroid(std::size_t c) const {
    return {centroids.data() + c * flat.dimension(), flat.dimension()};
  }

  std::uint32_t nearest(std::span<const float> v) const {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < nlist; ++c) {
      const double d = l2_distance(v, centroid(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  void assign() {
    for (std::uint32_t i = 0; i < flat.size(); ++i) assignment[i] = nearest(flat.vector(i));
  }

  std::vector<std::vector<std::uint32_t>> members() const {
    std::vector<std::vector<std::uint32_t>> cells(nlist);
    for (std::uint32_t i = 0; i < assignment.size(); ++i) cells[assignment[i]].push_back(i);
    return cells;
  }

  /// Moves the farthest member of the largest cell into each empty cell.
  void fill_empty_cells() {
    auto cells = members();
    const std::size_t dim = flat.dimension();
    for (std::size_t c = 0; c < nlist; ++c) {
      if (!cells[c].empty()) continue;
      std::size_t largest = 0;
      for (std::size_t k = 1; k < nlist; ++k) {
        if (cells[k].size() > cells[largest].size()) largest = k;
      }
      if (cells[largest].size() < 2) break;
      auto& donor = cells[largest];
      std::size_t far_pos = 0;
      double far_d = -1.0;
      for (std::size_t p = 0; p < donor.size(); ++p) {
        const double d = l2_distance(flat.vector(donor[p]), centroid(largest));
        if (d > far_d) {
          far_d = d;
          far_pos = p;
        }
      }
      const std::uint32_t moved = donor[far_pos];
      donor.erase(donor.begin() + static_cast<std::ptrdiff_t>(far_pos));
      cells[c].push_back(moved);
      assignment[moved] = static_cast<std::uint32_t>(c);
      const auto v = flat.vector(moved);
      std::copy(v.begin(), v.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
  }

  void update_centroids() {
    const std::size_t dim = flat.dimension();
    std::vector<double> sums(nlist * dim, 0.0);
    std::vector<std::size_t> counts(nlist, 0);
    for (std::uint32_t i = 0; i < flat.size(); ++i) {
      const auto v = flat.vector(i);
      const std::size_t c = assignment[i];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += v[d];
    }
    for (std::size_t c = 0; c < nlist; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        centroids[c * dim + d] = static_cast<float>(sums[c * dim + d] / counts[c]);
      }
    }
  }
};

}  // namespace

IvfFlatIndex build_ivf(const std::map<std::string, Embedding>& embeddings,
                       const IvfParams& params) {
  if (embeddings.empty()) throw ValidationError("cannot build an IVF index over zero vectors");
  if (params.kmeans_iters == 0) throw ValidationError("kmeans_iters must be >= 1");

  IvfFlatIndex index;
  index.flat_ = build_flat(embeddings);
  index.params_ = params;
  const std::size_t n = index.flat_.size();
  index.requested_nlist_ = params.nlist == 0 ? IvfParams::auto_nlist(n) : params.nlist;
  const std::size_t nlist = std::min(index.requested_nlist_, n);
  index.params_.nlist = nlist;

  const std::size_t dim = index.flat_.dimension();
  KMeans km{index.flat_, nlist, std::vector<float>(nlist * dim), std::vector<std::uint32_t>(n, 0)};

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(params.seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t c = 0; c < nlist; ++c) {
    const auto v = index.flat_.vector(order[c]);
    std::copy(v.begin(), v.end(), km.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
  }

  for (std::size_t it = 0; it < params.kmeans_iters; ++it) {
    km.assign();
    km.fill_empty_cells();
    km.update_centroids();
  }
  km.assign();
  km.fill_empty_cells();

  index.centroids_ = std::move(km.centroids);
  index.assignment_ = std::move(km.assignment);
  index.cells_.assign(nlist, {});
  for (std::uint32_t i = 0; i < n; ++i) index.cells_[index.assignment_[i]].push_back(i);
  return index;
}

RankedList search_ivf(const IvfFlatIndex& index, std::span<const float> query,
                      const SearchParams& params, std::string query_id) {
  const std::size_t nprobe =
      params.nprobe == 0 ? SearchParams::default_nprobe(index.nlist()) : params.nprobe;
  if (nprobe < 1 || nprobe > index.nlist()) {
    throw ValidationError("nprobe " + std::to_string(nprobe) + " outside [1, " +
                          std::to_string(index.nlist()) + "]");
  }
  if (params.top_k == 0) throw ValidationError("top_k must be >= 1");
  check_query(index.dimension(), query);

  std::vector<Hit> cells;
  cells.reserve(index.nlist());
  for (std::uint32_t c = 0; c < index.nlist(); ++c) {
    cells.push_back({l2_distance(query, index.centroid(c)), c});
  }
  std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(nprobe),
                    cells.end());

  std::vector<Hit> hits;
  for (std::size_t p = 0; p < nprobe; ++p) {
    for (auto ord : index.cell(cells[p].ordinal)) {
      hits.push_back({l2_distance(query, index.flat().vector(ord)), ord});
    }
  }
  return to_ranked(std::move(hits), params.top_k, index.flat(), std::move(query_id));
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kIvfMagic[8] = {'P', 'C', 'R', 'I', 'V', 'F', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ValidationError("vector index: truncated file");
  }
  return value;
}

template <typename T>
void put_array(std::ostream& out, const std::vector<T>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <typename T>
void get_array(std::istream& in, std::vector<T>& values, std::size_t n) {
  values.resize(n);
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)))) {
    throw ValidationError("vector index: truncated file");
  }
}

}  // namespace

// Layout: magic[8], u64 dimension, u64 n, u64 nlist, u64 requested_nlist,
// u64 kmeans_iters, u64 seed, n x (u64 id length, id bytes), n*dim f32 vectors,
// nlist*dim f32 centroids, n u32 cell assignments.
void IvfFlatIndex::save(std::ostream& out) const {
  out.write(kIvfMagic, sizeof(kIvfMagic));
  put<std::uint64_t>(out, dimension());
  put<std::uint64_t>(out, size());
  put<std::uint64_t>(out, nlist());
  put<std::uint64_t>(out, requested_nlist_);
  put<std::uint64_t>(out, params_.kmeans_iters);
  put<std::uint64_t>(out, params_.seed);
  for (const auto& id : flat_.ids_) {
    put<std::uint64_t>(out, id.size());
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  put_array(out, flat_.data_);
  put_array(out, centroids_);
  put_array(out, assignment_);
}

IvfFlatIndex IvfFlatIndex::load(std::istream& in) {
  char magic[8] = {};
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kIvfMagic)) {
    throw ValidationError("vector index: bad magic or unsupported version");
  }
  IvfFlatIndex index;
  const auto dim = get<std::uint64_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto nlist = get<std::uint64_t>(in);
  index.requested_nlist_ = get<std::uint64_t>(in);
  index.params_.kmeans_iters = get<std::uint64_t>(in);
  index.params_.seed = get<std::uint64_t>(in);
  index.params_.nlist = nlist;
  if (nlist == 0 || nlist > n || dim == 0) throw ValidationError("vector index: bad header");
  index.flat_.dimension_ = dim;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = get<std::uint64_t>(in);
    std::string id(len, '\0');
    if (!in.read(id.data(), static_cast<std::streamsize>(len))) {
      throw ValidationError("vector index: truncated file");
    }
    index.flat_.ids_.push_back(std::move(id));
  }
  get_array(in, index.flat_.data_, n * dim);
  get_array(in, index.centroids_, nlist * dim);
  get_array(in, index.assignment_, n);
  index.cells_.assign(nlist, {});
  for (std::uint32_t i = 0; i < n; ++i) {
    if (index.assignment_[i] >= nlist) throw ValidationError("vector index: bad cell id");
    index.cells_[index.assignment_[i]].push_back(i);
  }
  return index;
}

}  // namespace pcr
