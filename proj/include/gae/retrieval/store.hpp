#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gae/contrastive/encoder.hpp"
#include "gae/pairs/pairs.hpp"

namespace gae::retrieval {

/// Row-major float vectors keyed by segment id. Rows are sorted by id when
/// sealed; no mutation afterwards.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(int dim = 0) : dim_(dim) {}

  void add(std::string id, std::span<const float> vector);
  void add(std::string id, const Eigen::VectorXd& vector);
  /// Sorts rows by id; throws IntegrityError on a duplicate id.
  void seal();

  bool sealed() const { return sealed_; }
  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  /// Row of `id`, or -1.
  long find(std::string_view id) const;

  /// Binary store (magic "GAEE") plus a sidecar JSONL id map at
  /// `<path>.ids.jsonl`.
  void write(const std::filesystem::path& path) const;
  static EmbeddingStore read(const std::filesystem::path& path);

 private:
  int dim_;
  bool sealed_ = false;
  std::vector<std::string> ids_;
  std::vector<float> data_;
};

struct Hit {
  std::size_t row = 0;
  double score = 0;
  bool operator==(const Hit&) const = default;
};

/// Exact top-K by dot product, descending, ties to the smaller id (row).
/// K larger than the store returns every row with a warning.
std::vector<Hit> top_k(const EmbeddingStore& store, std::span<const double> query, std::size_t k);
std::vector<Hit> top_k(const EmbeddingStore& store, const Eigen::VectorXd& query, std::size_t k);

/// Embeds every pool member through the serializer and encoder, without
/// token selection. Work is spread over `threads` workers; the result does
/// not depend on the thread count.
EmbeddingStore embed_pool(const pairs::CandidatePool& pool, const serialize::CorpusIndex& index,
                          const contrastive::Featurizer& featurizer, const contrastive::EncoderParams& params,
                          bool normalize = true, int threads = 1);

}  // namespace gae::retrieval
