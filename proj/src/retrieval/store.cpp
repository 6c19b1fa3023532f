#include "gae/retrieval/store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <future>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/log.hpp"

namespace gae::retrieval {

namespace fs = std::filesystem;

void EmbeddingStore::add(std::string id, std::span<const float> vector) {
  if (sealed_) throw Error("embedding store is sealed");
  if (static_cast<int>(vector.size()) != dim_) {
    throw UserError("vector for '" + id + "' has dimension " + std::to_string(vector.size()) + ", store expects " +
                    std::to_string(dim_));
  }
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

void EmbeddingStore::add(std::string id, const Eigen::VectorXd& vector) {
  std::vector<float> v(static_cast<std::size_t>(vector.size()));
  for (Eigen::Index k = 0; k < vector.size(); ++k) v[k] = static_cast<float>(vector(k));
  add(std::move(id), v);
}

void EmbeddingStore::seal() {
  if (sealed_) return;
  std::vector<std::size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(ids_.size());
  data.reserve(data_.size());
  for (std::size_t r : order) {
    if (!ids.empty() && ids.back() == ids_[r]) throw IntegrityError("duplicate id '" + ids_[r] + "' in embedding store");
    ids.push_back(std::move(ids_[r]));
    const auto src = data_.begin() + static_cast<std::ptrdiff_t>(r * dim_);
    data.insert(data.end(), src, src + dim_);
  }
  ids_ = std::move(ids);
  data_ = std::move(data);
  sealed_ = true;
}

long EmbeddingStore::find(std::string_view id) const {
  if (!sealed_) throw Error("embedding store must be sealed before lookup");
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id, [](const std::string& a, std::string_view b) {
    return std::string_view(a) < b;
  });
  if (it == ids_.end() || *it != id) return -1;
  return static_cast<long>(it - ids_.begin());
}

namespace {

constexpr char kStoreMagic[4] = {'G', 'A', 'E', 'E'};
constexpr std::uint32_t kStoreVersion = 1;

template <typename U>
void put_le(std::ostream& out, U bits) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const fs::path& path) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw UserError(path.string() + ": truncated store");
  U bits = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) bits |= static_cast<U>(bytes[k]) << (8 * k);
  return bits;
}

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".ids.jsonl"); }

}  // namespace

void EmbeddingStore::write(const fs::path& path) const {
  if (!sealed_) throw Error("embedding store must be sealed before writing");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  out.write(kStoreMagic, 4);
  put_le<std::uint32_t>(out, kStoreVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(out, ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    put_le<std::uint64_t>(out, fnv1a64(ids_[r]));
    for (float f : row(r)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  std::ofstream ids(sidecar(path));
  if (!ids) throw UserError("cannot write " + sidecar(path).string());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    ids << nlohmann::ordered_json{{"row", r}, {"id", ids_[r]}}.dump() << "\n";
  }
}

EmbeddingStore EmbeddingStore::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open embedding store " + path.string() + " (run `embed` first)");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kStoreMagic, 4) != 0) {
    throw UserError(path.string() + ": not an embedding store");
  }
  if (get_le<std::uint32_t>(in, path) != kStoreVersion) throw UserError(path.string() + ": unsupported version");
  EmbeddingStore store(static_cast<int>(get_le<std::uint32_t>(in, path)));
  const auto count = get_le<std::uint64_t>(in, path);

  std::ifstream ids(sidecar(path));
  if (!ids) throw UserError("missing id map " + sidecar(path).string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(ids, line)) {
    if (!line.empty()) names.push_back(nlohmann::json::parse(line).at("id").get<std::string>());
  }
  if (names.size() != count) throw IntegrityError(path.string() + ": id map and store disagree on the row count");

  std::vector<float> v(static_cast<std::size_t>(store.dim_));
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto hash = get_le<std::uint64_t>(in, path);
    if (hash != fnv1a64(names[r])) throw IntegrityError(path.string() + ": id hash mismatch at row " + std::to_string(r));
    for (auto& f : v) f = std::bit_cast<float>(get_le<std::uint32_t>(in, path));
    store.add(names[r], v);
  }
  store.seal();
  return store;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

namespace {

double dot(std::span<const float> row, std::span<const double> q) {
  double s = 0;
  for (std::size_t k = 0; k < row.size(); ++k) s += static_cast<double>(row[k]) * q[k];
  return s;
}

// True when a ranks ahead of b.
bool ahead(const Hit& a, const Hit& b) { return a.score > b.score || (a.score == b.score && a.row < b.row); }

}  // namespace

std::vector<Hit> top_k(const EmbeddingStore& store, std::span<const double> query, std::size_t k) {
  if (k < 1) throw UserError("top_k: K must be at least 1");
  if (static_cast<int>(query.size()) != store.dim()) throw UserError("top_k: query dimension mismatch");
  if (!store.sealed()) throw Error("top_k: store must be sealed");
  if (k > store.size()) {
    logger()->warn("top_k: K = {} exceeds the {} candidates", k, store.size());
    k = store.size();
  }
  // Heap front is the weakest of the current best K.
  std::vector<Hit> heap;
  heap.reserve(k + 1);
  for (std::size_t r = 0; r < store.size(); ++r) {
    const Hit h{r, dot(store.row(r), query)};
    if (heap.size() < k) {
      heap.push_back(h);
      std::push_heap(heap.begin(), heap.end(), ahead);
    } else if (k > 0 && ahead(h, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), ahead);
      heap.back() = h;
      std::push_heap(heap.begin(), heap.end(), ahead);
    }
  }
  std::sort(heap.begin(), heap.end(), ahead);
  return heap;
}

std::vector<Hit> top_k(const EmbeddingStore& store, const Eigen::VectorXd& query, std::size_t k) {
  return top_k(store, std::span<const double>(query.data(), static_cast<std::size_t>(query.size())), k);
}

EmbeddingStore embed_pool(const pairs::CandidatePool& pool, const serialize::CorpusIndex& index,
                          const contrastive::Featurizer& featurizer, const contrastive::EncoderParams& params,
                          bool normalize, int threads) {
  const std::size_t n = pool.members.size();
  std::vector<Eigen::VectorXd> rows(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& seg = pool.members[i];
      try {
        rows[i] = contrastive::encode(featurizer.featurize(serialize::serialize_value(index, seg)), params, normalize);
      } catch (const Error& e) {
        throw IntegrityError("cannot embed pool member " + seg.id() + ": " + e.what());
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin >= end) break;
    jobs.push_back(std::async(std::launch::async, work, begin, end));
  }
  for (auto& j : jobs) j.get();

  EmbeddingStore store(params.dim());
  for (std::size_t i = 0; i < n; ++i) store.add(pool.members[i].id(), rows[i]);
  store.seal();
  return store;
}

}  // namespace gae::retrieval
