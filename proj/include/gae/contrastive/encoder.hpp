#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gae/common/image.hpp"
#include "gae/serialize/context.hpp"
#include "gae/tokensel/select.hpp"

namespace gae::contrastive {

struct EncoderConfig {
  int dim = 64;
  int buckets = 4096;
  bool normalize = true;
};

/// Reference encoder weights. text: buckets x d, patch: d x 3, output: d x d.
struct EncoderParams {
  Eigen::MatrixXd text;
  Eigen::MatrixXd patch;
  Eigen::MatrixXd output;

  int dim() const { return static_cast<int>(output.rows()); }
  int buckets() const { return static_cast<int>(text.rows()); }

  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  static EncoderParams zeros(int buckets, int dim);
  EncoderParams zeros_like() const { return zeros(buckets(), dim()); }

  bool finite() const;
  double max_abs_diff(const EncoderParams& other) const;
  EncoderParams& operator+=(const EncoderParams& other);
  bool operator==(const EncoderParams& other) const;
};

/// Versioned little-endian checkpoint: "GAEC", u32 version, u32 d, then
/// text, patch and output matrices, each as u64 rows, u64 cols and
/// row-major doubles.
void write_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams read_checkpoint(const std::filesystem::path& path);

/// Lower-cased runs of ASCII letters and digits; bytes >= 0x80 count as
/// word characters so UTF-8 text is kept whole.
std::vector<std::string> tokenize(std::string_view text);
std::uint32_t token_bucket(std::string_view token, int buckets);

/// Mean-pooling sufficient statistics of one sequence.
struct SequenceFeatures {
  std::vector<std::pair<std::uint32_t, double>> token_counts;  // sorted by bucket
  Eigen::Vector3d patch_sum = Eigen::Vector3d::Zero();          // sum of centred patch features
  int token_count = 0;
  int patch_count = 0;
  bool truncated = false;

  int length() const { return token_count + patch_count; }
};

/// Decoded screenshot plus the hash that seeds its token-selection stream.
struct ImageRecord {
  RgbImage image;
  std::string content_hash;
};
using ImageSource = std::function<ImageRecord(const std::string& state_id)>;

/// Reads screenshots of the indexed corpus from disk.
ImageSource corpus_image_source(const serialize::CorpusIndex& index);

struct MaskSpec {
  double mask_ratio = 0.5;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  tokensel::SelectMode mode = tokensel::SelectMode::kRandom;
};

struct FeaturizerOptions {
  int buckets = 4096;
  int patch_size = tokensel::kDefaultPatchSize;
  double delta = 0.0;
  int max_sequence_tokens = 65536;
};

/// Turns context sequences into encoder inputs. Patch grids and component
/// labelings are cached per state id; safe for concurrent use.
class Featurizer {
 public:
  Featurizer(ImageSource source, FeaturizerOptions options);

  /// Without a mask every patch is used (the evaluation path). Over-long
  /// sequences are cut from the front, keeping a key's query line.
  SequenceFeatures featurize(const serialize::ContextSequence& seq, const MaskSpec* mask = nullptr) const;

  const FeaturizerOptions& options() const { return options_; }

 private:
  struct CachedImage {
    tokensel::PatchGrid grid;
    tokensel::ComponentLabeling labeling;
    std::string content_hash;
  };
  std::shared_ptr<const CachedImage> image(const std::string& state_id) const;

  ImageSource source_;
  FeaturizerOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const CachedImage>, std::less<>> cache_;
};

/// Counts encoder activations held for backprop. grad_full keeps one per
/// sequence in the batch; grad_cached only per sub-batch.
struct ActivationCounter {
  long live = 0;
  long peak = 0;
  void acquire() { peak = std::max(peak, ++live); }
  void release() { --live; }
};

/// Intermediates kept between forward and backward.
struct ForwardCache {
  Eigen::VectorXd pooled;  // h
  Eigen::VectorXd projected;  // z = W h
  Eigen::VectorXd embedding;  // z / |z| or z
  double norm = 0;
};

ForwardCache forward(const SequenceFeatures& f, const EncoderParams& p, bool normalize);
Eigen::VectorXd encode(const SequenceFeatures& f, const EncoderParams& p, bool normalize);

/// Accumulates d(loss)/d(params) given d(loss)/d(embedding).
void backward(const SequenceFeatures& f, const ForwardCache& cache, const Eigen::VectorXd& grad_embedding,
              const EncoderParams& p, bool normalize, EncoderParams& grads);

}  // namespace gae::contrastive
