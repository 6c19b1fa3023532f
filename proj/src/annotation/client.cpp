#include "gae/annotation/client.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <future>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gae/annotation/prompts.hpp"
#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/log.hpp"

namespace gae::annotation {

using nlohmann::json;

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

namespace {

std::vector<MockEntity> default_dictionary() {
  return {
      {"t-shirt", "clothing product",
       {"laser printer", "coffee maker", "yoga mat", "desk lamp", "backpack"}},
      {"children", "target audience", {"adults", "seniors", "teenagers", "students", "toddlers"}},
      {"Amazon", "e-commerce platform", {"eBay", "Walmart", "Target", "Etsy", "Best Buy"}},
      {"Trello", "productivity application", {"Asana", "Notion", "Jira", "Monday", "Basecamp"}},
      {"New York", "city", {"Chicago", "Seattle", "Boston", "Denver", "Austin"}},
      {"flight", "travel booking", {"hotel room", "rental car", "train ticket", "cruise", "bus pass"}},
  };
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; }

/// Case-insensitive whole-word search starting at `from`.
std::size_t find_word(const std::string& haystack_lower, const std::string& needle_lower,
                      std::size_t from = 0) {
  for (auto pos = haystack_lower.find(needle_lower, from); pos != std::string::npos;
       pos = haystack_lower.find(needle_lower, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(haystack_lower[pos - 1]);
    const auto end = pos + needle_lower.size();
    const bool right_ok = end >= haystack_lower.size() || !is_word_char(haystack_lower[end]);
    if (left_ok && right_ok) return pos;
  }
  return std::string::npos;
}

std::string between(const std::string& text, std::string_view start, std::string_view stop) {
  const auto a = text.find(start);
  if (a == std::string::npos) return {};
  const auto from = a + start.size();
  const auto b = text.find(stop, from);
  return text.substr(from, b == std::string::npos ? std::string::npos : b - from);
}

constexpr std::string_view kRespondMarker = ".\nRespond with JSON only";

std::string strip_terminal_punct(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!' || s.back() == ' ')) {
    s.pop_back();
  }
  return s;
}

std::string lower_first(std::string s) {
  if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
      !std::isupper(static_cast<unsigned char>(s[1]))) {
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  }
  return s;
}

}  // namespace

MockTransport::MockTransport() : dictionary_(default_dictionary()) {}
MockTransport::MockTransport(std::vector<MockEntity> dictionary) : dictionary_(std::move(dictionary)) {}

MockTransport MockTransport::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open mock dictionary: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UserError("mock dictionary " + path.string() + ": " + e.what());
  }
  std::vector<MockEntity> dict;
  for (const auto& e : j) {
    dict.push_back({e.at("surface").get<std::string>(), e.at("label").get<std::string>(),
                    e.at("alternatives").get<std::vector<std::string>>()});
  }
  return MockTransport(std::move(dict));
}

std::string MockTransport::answer_ner(const std::string& prompt) const {
  const std::string sentence = between(prompt, "Sentence: ", kRespondMarker);
  const std::string low = lower(sentence);
  // Greedy: longest surfaces claim their span first.
  std::vector<const MockEntity*> order;
  for (const auto& e : dictionary_) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const MockEntity* a, const MockEntity* b) {
    return a->surface.size() > b->surface.size();
  });
  std::vector<std::pair<std::size_t, std::size_t>> taken;
  std::vector<std::pair<std::size_t, json>> found;
  for (const auto* e : order) {
    const auto pos = find_word(low, lower(e->surface));
    if (pos == std::string::npos) continue;
    const auto end = pos + e->surface.size();
    const bool overlaps = std::any_of(taken.begin(), taken.end(), [&](const auto& span) {
      return pos < span.second && span.first < end;
    });
    if (overlaps) continue;
    taken.emplace_back(pos, end);
    found.emplace_back(pos, json{{"surface", sentence.substr(pos, e->surface.size())}, {"label", e->label}});
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  json entities = json::array();
  for (auto& [pos, e] : found) entities.push_back(std::move(e));
  return json{{"entities", entities}}.dump();
}

std::string MockTransport::answer_alternatives(const std::string& prompt) const {
  json ners;
  try {
    ners = json::parse(between(prompt, "Named Entities: ", kRespondMarker));
  } catch (const json::exception&) {
    return "I could not read the entity list.";
  }
  static const std::vector<std::string> kFallback = {"Northwind", "Contoso", "Fabrikam", "Tailspin",
                                                     "Litware"};
  json alternatives = json::object();
  for (const auto& e : ners) {
    const auto surface = e.value("surface", std::string());
    const auto low = lower(surface);
    const auto it = std::find_if(dictionary_.begin(), dictionary_.end(),
                                 [&](const MockEntity& d) { return lower(d.surface) == low; });
    alternatives[surface] = it != dictionary_.end() ? it->alternatives : kFallback;
  }
  return json{{"alternatives", alternatives}}.dump();
}

std::string MockTransport::answer_rewrite(const std::string& prompt) const {
  static const std::vector<std::pair<std::string, std::string>> kStyles = {
      {"Please ", "."},
      {"Could you ", "?"},
      {"I would like to ", "."},
      {"Help me ", "."},
      {"Can you ", " for me?"},
  };
  std::vector<std::string> queries;
  const auto body = between(prompt, "\nQueries:", "\nRespond with JSON only");
  std::size_t pos = 0;
  while ((pos = body.find('\n', pos)) != std::string::npos) {
    ++pos;
    const auto end = body.find('\n', pos);
    std::string line = body.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    const auto dot = line.find(". ");
    if (dot != std::string::npos) queries.push_back(line.substr(dot + 2));
  }
  json rewrites = json::array();
  for (std::size_t k = 0; k < queries.size(); ++k) {
    const auto& [head, tail] = kStyles[k % kStyles.size()];
    rewrites.push_back(head + lower_first(strip_terminal_punct(queries[k])) + tail);
  }
  return json{{"rewrites", rewrites}}.dump();
}

std::string MockTransport::send(const ChatRequest& request) {
  const auto& p = request.prompt;
  if (p.starts_with(kDescribeStatePrompt)) {
    const std::string hash =
        request.images.empty() ? sha256_hex({reinterpret_cast<const unsigned char*>(p.data()), p.size()})
                               : request.images.front().content_hash;
    return "Mock description of " + hash.substr(0, 12);
  }
  if (p.starts_with(kNerPromptPrefix)) return answer_ner(p);
  if (p.starts_with(kAlternativesPromptPrefix)) return answer_alternatives(p);
  if (p.starts_with(kRewritePromptPrefix)) return answer_rewrite(p);
  if (p.starts_with(kHtmlRenderPromptPrefix)) {
    const auto html = between(p, "HTML: ", ". Ensure that the returned HTML");
    return "<!DOCTYPE html><html><head><style>body{font-family:sans-serif}</style></head><body>" +
           html + "</body></html>";
  }
  return "Mock response " +
         sha256_hex({reinterpret_cast<const unsigned char*>(p.data()), p.size()}).substr(0, 12);
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(AnnotationBackend backend) : backend_(std::move(backend)) {
  if (const char* tok = std::getenv(backend_.token_env.c_str())) token_ = tok;
}

std::string HttpTransport::send(const ChatRequest& request) {
  const auto& url = backend_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UserError("annotation endpoint is not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& img : request.images) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64_data}}}});
  }
  const json body{{"model", backend_.model_name},
                  {"messages", json::array({json{{"role", "user"}, {"content", content}}})}};

  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(backend_.timeout_seconds);
  const auto usecs = static_cast<time_t>((backend_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request " + request.id + " to " + url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("request " + request.id + " to " + url + " returned HTTP " +
                         std::to_string(res->status));
  }
  try {
    const auto reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ContentError("request " + request.id + ": unexpected response shape: " + e.what());
  }
}

std::shared_ptr<Transport> make_transport(const AnnotationBackend& backend) {
  if (backend.is_mock()) return std::make_shared<MockTransport>();
  return std::make_shared<HttpTransport>(backend);
}

// ---------------------------------------------------------------------------
// Audit + client
// ---------------------------------------------------------------------------

AuditLog::AuditLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw UserError("cannot open audit log: " + path.string());
}

void AuditLog::record(const ChatRequest& request, const std::string& response, int attempts,
                      std::chrono::milliseconds latency, const std::string& error) {
  json images = json::array();
  for (const auto& img : request.images) images.push_back(img.content_hash);
  nlohmann::ordered_json line{{"request_id", request.id},
                              {"prompt", request.prompt},
                              {"images", images},
                              {"response", response},
                              {"attempts", attempts},
                              {"latency_ms", latency.count()},
                              {"error", error.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(error)}};
  std::lock_guard lock(mutex_);
  out_ << line.dump() << '\n';
  out_.flush();
}

AnnotationClient::AnnotationClient(AnnotationBackend backend, std::shared_ptr<Transport> transport,
                                   AuditLog* audit, Sleeper sleeper)
    : backend_(std::move(backend)), transport_(std::move(transport)), audit_(audit),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
      })) {
  if (backend_.max_retries < 0) throw UserError("max_retries must be >= 0");
  if (!transport_) throw UserError("annotation client needs a transport");
}

CompletionResult AnnotationClient::complete(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  auto delay = backend_.backoff_base;
  std::string last_error;
  const int max_attempts = 1 + backend_.max_retries;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) {
      sleeper_(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * backend_.backoff_factor));
    }
    try {
      std::string text = transport_->send(request);
      const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);
      if (attempt > 1) logger()->info("request {} succeeded after {} attempts", request.id, attempt);
      if (audit_) audit_->record(request, text, attempt, latency, "");
      return {std::move(text), attempt};
    } catch (const TransportError& e) {
      last_error = e.what();
      logger()->warn("request {} attempt {}/{} failed: {}", request.id, attempt, max_attempts, last_error);
    }
  }
  const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  if (audit_) audit_->record(request, "", max_attempts, latency, last_error);
  throw TransportError("request " + request.id + " failed after " + std::to_string(max_attempts) +
                       " attempts: " + last_error);
}

std::vector<CompletionResult> AnnotationClient::complete_all(const std::vector<ChatRequest>& requests) {
  std::vector<CompletionResult> results(requests.size());
  const std::size_t cap = static_cast<std::size_t>(std::max(1, backend_.max_in_flight));
  for (std::size_t begin = 0; begin < requests.size(); begin += cap) {
    const std::size_t end = std::min(requests.size(), begin + cap);
    std::vector<std::future<CompletionResult>> wave;
    for (std::size_t k = begin; k < end; ++k) {
      wave.push_back(std::async(std::launch::async, [this, &requests, k] { return complete(requests[k]); }));
    }
    // get() in request order; an exception propagates after the wave drains.
    std::exception_ptr failure;
    for (std::size_t k = begin; k < end; ++k) {
      try {
        results[k] = wave[k - begin].get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return results;
}

}  // namespace gae::annotation
