#include "gae/retrieval/recall.hpp"

#include <cstdio>
#include <future>
#include <set>

#include "gae/common/error.hpp"

namespace gae::retrieval {

using pairs::Split;
using pairs::Subtask;

const EmbeddingStore& StoreSet::get(pairs::PoolKind k) const {
  const auto it = stores.find(k);
  if (it == stores.end()) {
    throw UserError("no embedding store for the " + std::string(pairs::pool_kind_name(k)) + " pool (run `embed` first)");
  }
  return it->second;
}

std::size_t rank_of(const EmbeddingStore& store, std::span<const double> query, std::size_t positive_row) {
  double pos = 0;
  const auto prow = store.row(positive_row);
  for (std::size_t k = 0; k < prow.size(); ++k) pos += static_cast<double>(prow[k]) * query[k];
  std::size_t rank = 1;
  for (std::size_t r = 0; r < store.size(); ++r) {
    if (r == positive_row) continue;
    double s = 0;
    const auto row = store.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) s += static_cast<double>(row[k]) * query[k];
    if (s > pos || (s == pos && r < positive_row)) ++rank;
  }
  return rank;
}

RecallReport recall_at_k(const std::vector<pairs::RetrievalPair>& pairs, const std::vector<Eigen::VectorXd>& queries,
                         const StoreSet& stores, int threads) {
  if (pairs.size() != queries.size()) throw UserError("recall_at_k: one query embedding per pair required");
  std::vector<long> positive(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& store = stores.get(pairs::value_pool(pairs[i].subtask));
    positive[i] = store.find(pairs[i].value_segment.id());
    if (positive[i] < 0) {
      throw IntegrityError("pair " + pairs[i].id + ": positive " + pairs[i].value_segment.id() + " is not in the " +
                           std::string(pairs::pool_kind_name(pairs::value_pool(pairs[i].subtask))) + " pool");
    }
  }

  constexpr std::size_t kMaxK = kRecallKs.back();
  std::vector<std::size_t> rank(pairs.size());  // position within the top kMaxK, or kMaxK + 1
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& store = stores.get(pairs::value_pool(pairs[i].subtask));
      const auto hits = top_k(store, queries[i], std::min(kMaxK, store.size()));
      rank[i] = kMaxK + 1;
      for (std::size_t h = 0; h < hits.size(); ++h) {
        if (hits[h].row == static_cast<std::size_t>(positive[i])) rank[i] = h + 1;
      }
    }
  };
  const std::size_t n = pairs.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1)));
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin >= end) break;
    jobs.push_back(std::async(std::launch::async, work, begin, end));
  }
  for (auto& j : jobs) j.get();

  RecallReport report;
  for (std::size_t i = 0; i < n; ++i) {
    auto& cell = report.cells[{pairs[i].subtask, pairs[i].source, pairs[i].split}];
    ++cell.queries;
    for (std::size_t k = 0; k < kRecallKs.size(); ++k) {
      if (rank[i] <= kRecallKs[k]) ++cell.hits[k];
    }
  }
  return report;
}

std::map<std::pair<std::string, Split>, RecallCell> RecallReport::by_source() const {
  std::map<std::pair<std::string, Split>, RecallCell> out;
  for (const auto& [key, cell] : cells) {
    auto& agg = out[{std::get<1>(key), std::get<2>(key)}];
    agg.queries += cell.queries;
    for (std::size_t k = 0; k < agg.hits.size(); ++k) agg.hits[k] += cell.hits[k];
  }
  return out;
}

std::vector<std::string> RecallReport::sources() const {
  std::set<std::string> s;
  for (const auto& [key, cell] : cells) s.insert(std::get<1>(key));
  return {s.begin(), s.end()};
}

std::vector<Split> RecallReport::splits() const {
  std::set<Split> s;
  for (const auto& [key, cell] : cells) s.insert(std::get<2>(key));
  return {s.begin(), s.end()};
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

std::string RecallReport::overall_tsv() const {
  const auto srcs = sources();
  const auto agg = by_source();
  std::string out = "split";
  for (const auto& s : srcs) out += "\t" + s + " R@1\t" + s + " R@5\t" + s + " R@10";
  out += "\n";
  for (Split sp : splits()) {
    out += std::string(pairs::split_name(sp));
    for (const auto& s : srcs) {
      const auto it = agg.find({s, sp});
      for (std::size_t k = 0; k < kRecallKs.size(); ++k) out += "\t" + (it == agg.end() ? "-" : pct(it->second.recall(k)));
    }
    out += "\n";
  }
  return out;
}

std::string RecallReport::subtask_tsv() const {
  std::string out = "split\tsource";
  for (auto s : pairs::kAllSubtasks) out += "\t" + std::string(pairs::subtask_label(s));
  out += "\n";
  for (Split sp : splits()) {
    for (const auto& src : sources()) {
      out += std::string(pairs::split_name(sp)) + "\t" + src;
      for (auto s : pairs::kAllSubtasks) {
        const auto it = cells.find({s, src, sp});
        if (it == cells.end()) {
          out += "\t-";
        } else {
          out += "\t" + pct(it->second.recall(0)) + "/" + pct(it->second.recall(1)) + "/" + pct(it->second.recall(2));
        }
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace gae::retrieval
