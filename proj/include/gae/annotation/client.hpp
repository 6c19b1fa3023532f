#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace gae::annotation {

struct ImageAttachment {
  std::string content_hash;
  std::string media_type = "image/png";
  std::string base64_data;
};

struct ChatRequest {
  std::string id;
  std::string prompt;
  std::vector<ImageAttachment> images;
};

/// One round trip to a text-generation service. Implementations throw
/// TransportError for anything retryable.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const ChatRequest& request) = 0;
  /// True if send() may touch the network.
  virtual bool is_remote() const = 0;
};

/// Endpoint configuration. `endpoint == "mock"` selects MockTransport.
struct AnnotationBackend {
  std::string endpoint = "mock";
  std::string model_name = "gpt-4o-mini-2024-07-18";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  /// Environment variable holding the bearer token.
  std::string token_env = "GAE_ANNOTATION_TOKEN";
  /// Upper bound on concurrent requests in complete_all().
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;

  bool is_mock() const { return endpoint == "mock"; }
};

/// Entity entry used by the mock backend: surface form, label and the
/// alternatives it proposes.
struct MockEntity {
  std::string surface;
  std::string label;
  std::vector<std::string> alternatives;
};

/// Deterministic offline backend. The response is a pure function of the
/// request text and attachment hashes.
class MockTransport final : public Transport {
 public:
  MockTransport();
  explicit MockTransport(std::vector<MockEntity> dictionary);

  /// Replaces the entity dictionary from a JSON file:
  /// [{"surface": ..., "label": ..., "alternatives": [...]}, ...]
  static MockTransport from_file(const std::filesystem::path& path);

  std::string send(const ChatRequest& request) override;
  bool is_remote() const override { return false; }

  const std::vector<MockEntity>& dictionary() const { return dictionary_; }

 private:
  std::string answer_ner(const std::string& prompt) const;
  std::string answer_alternatives(const std::string& prompt) const;
  std::string answer_rewrite(const std::string& prompt) const;

  std::vector<MockEntity> dictionary_;
};

/// Chat-completions style HTTP(S) endpoint.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(AnnotationBackend backend);
  std::string send(const ChatRequest& request) override;
  bool is_remote() const override { return true; }

 private:
  AnnotationBackend backend_;
  std::string token_;
};

/// Forwards to another transport and counts calls; tests use it to prove
/// the mock path never reaches a remote transport.
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}
  std::string send(const ChatRequest& request) override {
    ++calls_;
    if (inner_->is_remote()) ++remote_calls_;
    return inner_->send(request);
  }
  bool is_remote() const override { return inner_->is_remote(); }
  int calls() const { return calls_.load(); }
  int remote_calls() const { return remote_calls_.load(); }

 private:
  std::shared_ptr<Transport> inner_;
  std::atomic<int> calls_{0};
  std::atomic<int> remote_calls_{0};
};

std::shared_ptr<Transport> make_transport(const AnnotationBackend& backend);

/// Append-only JSONL of (request, response, latency). Thread-safe.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void record(const ChatRequest& request, const std::string& response, int attempts,
              std::chrono::milliseconds latency, const std::string& error);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

struct CompletionResult {
  std::string text;
  int attempts = 0;
};

/// Retrying front end over a Transport.
class AnnotationClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  AnnotationClient(AnnotationBackend backend, std::shared_ptr<Transport> transport,
                   AuditLog* audit = nullptr, Sleeper sleeper = {});

  /// Up to 1 + max_retries attempts with exponential backoff between them.
  /// Throws TransportError once attempts are exhausted.
  CompletionResult complete(const ChatRequest& request);

  /// Runs requests with at most `max_in_flight` outstanding; results are in
  /// request order regardless of completion order.
  std::vector<CompletionResult> complete_all(const std::vector<ChatRequest>& requests);

  const AnnotationBackend& backend() const { return backend_; }
  Transport& transport() { return *transport_; }

 private:
  AnnotationBackend backend_;
  std::shared_ptr<Transport> transport_;
  AuditLog* audit_;
  Sleeper sleeper_;
};

std::string base64_encode(const std::vector<unsigned char>& bytes);

}  // namespace gae::annotation
