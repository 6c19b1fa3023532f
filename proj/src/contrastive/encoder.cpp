#include "gae/contrastive/encoder.hpp"

#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/log.hpp"
#include "gae/common/rng.hpp"

namespace gae::contrastive {

namespace fs = std::filesystem;

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
  if (config.dim <= 0 || config.buckets <= 0) throw UserError("encoder dimensions must be positive");
  Rng rng(derive_seed(seed, "encoder-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  EncoderParams p = zeros(config.buckets, config.dim);
  for (Eigen::Index r = 0; r < p.text.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.text.cols(); ++c) p.text(r, c) = rng.normal();
  }
  for (Eigen::Index r = 0; r < p.patch.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.patch.cols(); ++c) p.patch(r, c) = rng.normal();
  }
  for (Eigen::Index r = 0; r < p.output.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.output.cols(); ++c) p.output(r, c) = scale * rng.normal();
  }
  p.output.diagonal().array() += 1.0;
  return p;
}

EncoderParams EncoderParams::zeros(int buckets, int dim) {
  return {Eigen::MatrixXd::Zero(buckets, dim), Eigen::MatrixXd::Zero(dim, 3), Eigen::MatrixXd::Zero(dim, dim)};
}

bool EncoderParams::finite() const {
  return text.allFinite() && patch.allFinite() && output.allFinite();
}

double EncoderParams::max_abs_diff(const EncoderParams& o) const {
  if (text.rows() != o.text.rows() || dim() != o.dim()) throw UserError("parameter shapes differ");
  return std::max({(text - o.text).cwiseAbs().maxCoeff(), (patch - o.patch).cwiseAbs().maxCoeff(),
                   (output - o.output).cwiseAbs().maxCoeff()});
}

EncoderParams& EncoderParams::operator+=(const EncoderParams& o) {
  text += o.text;
  patch += o.patch;
  output += o.output;
  return *this;
}

bool EncoderParams::operator==(const EncoderParams& o) const {
  return text.rows() == o.text.rows() && dim() == o.dim() && text == o.text && patch == o.patch &&
         output == o.output;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'A', 'E', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(value);
  unsigned char bytes[sizeof(T)];
  for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const fs::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw UserError(path.string() + ": truncated checkpoint");
  std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t> bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<decltype(bits)>(bytes[k]) << (8 * k);
  return std::bit_cast<T>(bits);
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(out, m(r, c));
  }
}

Eigen::MatrixXd get_matrix(std::istream& in, const fs::path& path, Eigen::Index rows_expected,
                           Eigen::Index cols_expected) {
  const auto rows = get_le<std::uint64_t>(in, path);
  const auto cols = get_le<std::uint64_t>(in, path);
  if ((rows_expected >= 0 && rows != static_cast<std::uint64_t>(rows_expected)) ||
      cols != static_cast<std::uint64_t>(cols_expected) || rows == 0 || rows > (1u << 24)) {
    throw UserError(path.string() + ": checkpoint matrix has unexpected shape " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_le<double>(in, path);
  }
  return m;
}

}  // namespace

void write_checkpoint(const fs::path& path, const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.dim()));
  put_matrix(out, params.text);
  put_matrix(out, params.patch);
  put_matrix(out, params.output);
  if (!out) throw UserError("failed writing checkpoint " + path.string());
}

EncoderParams read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open checkpoint " + path.string() + " (run `train` first)");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw UserError(path.string() + ": not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw UserError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto d = static_cast<Eigen::Index>(get_le<std::uint32_t>(in, path));
  EncoderParams p;
  p.text = get_matrix(in, path, -1, d);
  p.patch = get_matrix(in, path, d, 3);
  p.output = get_matrix(in, path, d, d);
  if (in.peek() != std::char_traits<char>::eof()) throw UserError(path.string() + ": trailing bytes in checkpoint");
  if (!p.finite()) throw UserError(path.string() + ": checkpoint contains non-finite weights");
  return p;
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      word += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

std::uint32_t token_bucket(std::string_view token, int buckets) {
  return static_cast<std::uint32_t>(fnv1a64(token) % static_cast<std::uint64_t>(buckets));
}

ImageSource corpus_image_source(const serialize::CorpusIndex& index) {
  return [&index](const std::string& state_id) {
    const auto id = trajectory::StateId::parse(state_id);
    const auto& t = index.at(id.trajectory_id);
    const auto& s = index.state(state_id);
    return ImageRecord{read_png(t.image_root / s.screenshot.path), s.content_hash};
  };
}

Featurizer::Featurizer(ImageSource source, FeaturizerOptions options)
    : source_(std::move(source)), options_(options) {
  if (options_.buckets <= 0) throw UserError("bucket count must be positive");
  if (options_.max_sequence_tokens <= 0) throw UserError("max_sequence_tokens must be positive");
}

std::shared_ptr<const Featurizer::CachedImage> Featurizer::image(const std::string& state_id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(state_id); it != cache_.end()) return it->second;
  }
  auto record = source_(state_id);
  auto entry = std::make_shared<CachedImage>();
  entry->grid = tokensel::make_patch_grid(record.image, options_.patch_size);
  entry->labeling = tokensel::build_components(entry->grid, options_.delta);
  entry->content_hash = std::move(record.content_hash);
  std::lock_guard lock(mutex_);
  return cache_.emplace(state_id, std::move(entry)).first->second;
}

namespace {

// One pooled element: a token bucket, or a patch (bucket < 0).
struct Unit {
  std::int64_t bucket = -1;
  Eigen::Vector3d feature = Eigen::Vector3d::Zero();
};

}  // namespace

SequenceFeatures Featurizer::featurize(const serialize::ContextSequence& seq, const MaskSpec* mask) const {
  std::vector<Unit> units;
  std::size_t protected_prefix = 0;
  bool first_run = true;
  for (const auto& element : seq.elements) {
    if (const auto* run = std::get_if<serialize::TextRun>(&element)) {
      std::string_view text = run->text;
      if (first_run && seq.side == serialize::Side::kKey) {
        const auto nl = text.find('\n');
        protected_prefix = tokenize(text.substr(0, nl)).size();
      }
      for (const auto& tok : tokenize(text)) units.push_back({token_bucket(tok, options_.buckets), {}});
    } else {
      const auto img = image(std::get<serialize::ImageSlot>(element).state_id);
      tokensel::SelectionMask keep;
      if (mask && mask->mask_ratio > 0) {
        keep = tokensel::select_tokens(img->labeling, mask->mask_ratio,
                                       tokensel::mask_seed(img->content_hash, mask->seed, mask->step), mask->mode);
      }
      for (std::size_t p = 0; p < img->grid.size(); ++p) {
        if (!keep.keep.empty() && !keep.keep[p]) continue;
        const auto& f = img->grid.features[p];
        units.push_back({-1, Eigen::Vector3d(f[0] / 255.0 - 0.5, f[1] / 255.0 - 0.5, f[2] / 255.0 - 0.5)});
      }
    }
    first_run = false;
  }

  SequenceFeatures out;
  const std::size_t cap = static_cast<std::size_t>(options_.max_sequence_tokens);
  std::size_t head = units.size();
  std::size_t tail_begin = units.size();
  if (units.size() > cap) {
    head = std::min(protected_prefix, cap);
    tail_begin = units.size() - (cap - head);
    out.truncated = true;
    logger()->warn("sequence of {} elements truncated to {} (front of the payload dropped)", units.size(), cap);
  }
  std::map<std::uint32_t, double> counts;
  for (std::size_t k = 0; k < units.size(); ++k) {
    if (k >= head && k < tail_begin) continue;
    if (units[k].bucket >= 0) {
      counts[static_cast<std::uint32_t>(units[k].bucket)] += 1.0;
      ++out.token_count;
    } else {
      out.patch_sum += units[k].feature;
      ++out.patch_count;
    }
  }
  out.token_counts.assign(counts.begin(), counts.end());
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

ForwardCache forward(const SequenceFeatures& f, const EncoderParams& p, bool normalize) {
  ForwardCache c;
  c.pooled = Eigen::VectorXd::Zero(p.dim());
  if (f.length() > 0) {
    for (const auto& [bucket, count] : f.token_counts) c.pooled += count * p.text.row(bucket).transpose();
    c.pooled += p.patch * f.patch_sum;
    c.pooled /= static_cast<double>(f.length());
  }
  c.projected = p.output * c.pooled;
  c.norm = c.projected.norm();
  c.embedding = normalize && c.norm > 0 ? Eigen::VectorXd(c.projected / c.norm) : c.projected;
  return c;
}

Eigen::VectorXd encode(const SequenceFeatures& f, const EncoderParams& p, bool normalize) {
  return forward(f, p, normalize).embedding;
}

void backward(const SequenceFeatures& f, const ForwardCache& c, const Eigen::VectorXd& grad_embedding,
              const EncoderParams& p, bool normalize, EncoderParams& grads) {
  Eigen::VectorXd dz = grad_embedding;
  if (normalize && c.norm > 0) dz = (grad_embedding - c.embedding * c.embedding.dot(grad_embedding)) / c.norm;
  grads.output.noalias() += dz * c.pooled.transpose();
  if (f.length() == 0) return;
  const Eigen::VectorXd dh = (p.output.transpose() * dz) / static_cast<double>(f.length());
  for (const auto& [bucket, count] : f.token_counts) grads.text.row(bucket) += count * dh.transpose();
  grads.patch.noalias() += dh * f.patch_sum.transpose();
}

}  // namespace gae::contrastive
