#pragma once

#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylescout/backend.hpp"

namespace stylescout {

// Backend wire protocol: one JSON object per line in each direction.
//
//   request  {"id": n, "op": "meta" | "generate" | "embed" | "importance", "payload": {...}}
//   success  {"id": n, "ok": true, "result": {...}}
//   failure  {"id": n, "ok": false, "error": {"code": "...", "message": "..."}}
//
// Payloads and results:
//   meta        {}                                  -> {"D", "layout": [{"layer", "channels"}], "E",
//                                                       "lambda_max", "exemplars": [{"id", "values"}]}
//   generate    {"values": [D numbers]}             -> {"image": base64 PNG, "width", "height"}
//   embed       {"image": base64 PNG}               -> {"embedding": [E numbers]}
//   importance  {"exemplar_id", "mask": [64 rows of 64 '0'/'1']} -> {"weights": [D numbers]}

nlohmann::json meta_to_json(const BackendMeta& meta);
BackendMeta meta_from_json(const nlohmann::json& j);

/// Answers one request. Never throws: failures become error replies.
nlohmann::json handle_backend_request(const GeneratorBackend& backend, const nlohmann::json& request);

/// Same, for one raw line (malformed JSON yields a "bad_request" reply).
std::string handle_backend_line(const GeneratorBackend& backend, const std::string& line);

/// Serves requests from `in` until end of stream.
void serve_backend(const GeneratorBackend& backend, std::istream& in, std::ostream& out);

/// Carries one request line to a backend and returns its reply line.
class LineTransport {
 public:
  virtual ~LineTransport() = default;
  virtual std::string roundtrip(const std::string& line) = 0;
};

/// In-process transport that still goes through full serialization.
class LoopbackTransport final : public LineTransport {
 public:
  explicit LoopbackTransport(const GeneratorBackend& backend) : backend_(backend) {}
  std::string roundtrip(const std::string& line) override { return handle_backend_line(backend_, line); }

 private:
  const GeneratorBackend& backend_;
};

/// Runs `command` under /bin/sh and talks to it over stdin/stdout.
class ProcessTransport final : public LineTransport {
 public:
  explicit ProcessTransport(const std::string& command);
  ~ProcessTransport() override;
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  std::string roundtrip(const std::string& line) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// GeneratorBackend client for the wire protocol. Requests are serialized
/// over the single transport; every error reply surfaces as BackendError.
class RemoteBackend final : public GeneratorBackend {
 public:
  explicit RemoteBackend(std::unique_ptr<LineTransport> transport);

  const BackendMeta& meta() const override { return meta_; }
  Image generate(const StyleVector& values) const override;
  Eigen::VectorXd embed(const Image& image) const override;
  Eigen::VectorXd importance(const HighlightMask& mask) const override;

  /// Sends a raw request and returns the full reply object.
  nlohmann::json call(const std::string& op, const nlohmann::json& payload) const;

 private:
  nlohmann::json result(const std::string& op, const nlohmann::json& payload) const;

  std::unique_ptr<LineTransport> transport_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 1;
  BackendMeta meta_;
};

}  // namespace stylescout
