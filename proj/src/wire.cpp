#include "stylescout/wire.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <sys/wait.h>
#include <unistd.h>

#include "stylescout/error.hpp"

namespace stylescout {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json error_reply(const json& id, const std::string& code, const std::string& message) {
  return {{"id", id}, {"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

json meta_to_json(const BackendMeta& meta) {
  json layout = json::array();
  for (const auto& l : meta.layout) layout.push_back({{"layer", l.layer}, {"channels", l.channels}});
  json exemplars = json::array();
  for (const auto& e : meta.exemplars) exemplars.push_back({{"id", e.id}, {"values", vector_json(e.values)}});
  return {{"D", meta.dim},
          {"layout", std::move(layout)},
          {"E", meta.embedding_dim},
          {"lambda_max", meta.lambda_max},
          {"exemplars", std::move(exemplars)}};
}

BackendMeta meta_from_json(const json& j) {
  BackendMeta meta;
  meta.dim = j.at("D").get<Eigen::Index>();
  for (const auto& l : j.at("layout")) meta.layout.push_back({l.at("layer").get<int>(), l.at("channels").get<int>()});
  meta.embedding_dim = j.at("E").get<Eigen::Index>();
  meta.lambda_max = j.at("lambda_max").get<double>();
  for (const auto& e : j.at("exemplars")) meta.exemplars.push_back({e.at("id").get<std::string>(), vector_from(e.at("values"))});
  meta.validate();
  return meta;
}

json handle_backend_request(const GeneratorBackend& backend, const json& request) {
  const json id = request.is_object() && request.contains("id") ? request["id"] : json(nullptr);
  try {
    if (!request.is_object() || !request.contains("op") || !request["op"].is_string()) {
      return error_reply(id, "bad_request", "request needs a string 'op'");
    }
    const std::string op = request["op"].get<std::string>();
    const json payload = request.value("payload", json::object());
    json result;
    if (op == "meta") {
      result = meta_to_json(backend.meta());
    } else if (op == "generate") {
      const Eigen::VectorXd values = vector_from(payload.at("values"));
      if (values.size() != backend.meta().dim) throw InvalidArgument("generate: dimension mismatch");
      const Image image = backend.generate(values);
      result = {{"image", image_to_base64_png(image)}, {"width", image.width}, {"height", image.height}};
    } else if (op == "embed") {
      const Image image = image_from_base64_png(payload.at("image").get<std::string>());
      result = {{"embedding", vector_json(backend.embed(image))}};
    } else if (op == "importance") {
      const HighlightMask mask = HighlightMask::from_rows(payload.at("exemplar_id").get<std::string>(),
                                                          payload.at("mask").get<std::vector<std::string>>());
      result = {{"weights", vector_json(backend.importance(mask))}};
    } else {
      return error_reply(id, "bad_request", "unknown op: " + op);
    }
    return {{"id", id}, {"ok", true}, {"result", std::move(result)}};
  } catch (const json::exception& e) {
    return error_reply(id, "bad_request", e.what());
  } catch (const Error& e) {
    return error_reply(id, e.code(), e.what());
  } catch (const std::exception& e) {
    return error_reply(id, "backend_error", e.what());
  }
}

std::string handle_backend_line(const GeneratorBackend& backend, const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_reply(nullptr, "bad_request", e.what()).dump();
  }
  return handle_backend_request(backend, request).dump();
}

void serve_backend(const GeneratorBackend& backend, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_backend_line(backend, line) << '\n';
    out.flush();
  }
}

// ---------------------------------------------------------------- process

ProcessTransport::ProcessTransport(const std::string& command) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw BackendError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw BackendError(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) throw BackendError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  std::signal(SIGPIPE, SIG_IGN);
}

ProcessTransport::~ProcessTransport() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string ProcessTransport::roundtrip(const std::string& line) {
  std::string out = line;
  out += '\n';
  const char* p = out.data();
  std::size_t left = out.size();
  while (left > 0) {
    const ssize_t n = write(to_child_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BackendError(std::string("backend process: write failed: ") + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string reply = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return reply;
    }
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BackendError("backend process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

// ---------------------------------------------------------------- client

RemoteBackend::RemoteBackend(std::unique_ptr<LineTransport> transport) : transport_(std::move(transport)) {
  try {
    meta_ = meta_from_json(result("meta", json::object()));
  } catch (const json::exception& e) {
    throw BackendError(std::string("meta: malformed reply: ") + e.what());
  }
}

json RemoteBackend::call(const std::string& op, const json& payload) const {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = next_id_++;
  const json request = {{"id", id}, {"op", op}, {"payload", payload}};
  json reply;
  try {
    reply = json::parse(transport_->roundtrip(request.dump()));
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("backend reply is not JSON: ") + e.what());
  }
  if (!reply.is_object() || reply.value("id", json(nullptr)) != json(id)) {
    throw BackendError("backend reply does not match request " + std::to_string(id));
  }
  return reply;
}

json RemoteBackend::result(const std::string& op, const json& payload) const {
  const json reply = call(op, payload);
  if (!reply.value("ok", false)) {
    const json error = reply.value("error", json::object());
    throw BackendError(op + ": " + error.value("code", std::string("error")) + ": " +
                       error.value("message", std::string("backend failure")));
  }
  return reply.at("result");
}

Image RemoteBackend::generate(const StyleVector& values) const {
  try {
    return image_from_base64_png(result("generate", {{"values", vector_json(values)}}).at("image").get<std::string>());
  } catch (const json::exception& e) {
    throw BackendError(std::string("generate: malformed reply: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw BackendError(std::string("generate: undecodable image: ") + e.what());
  }
}

Eigen::VectorXd RemoteBackend::embed(const Image& image) const {
  try {
    return vector_from(result("embed", {{"image", image_to_base64_png(image)}}).at("embedding"));
  } catch (const json::exception& e) {
    throw BackendError(std::string("embed: malformed reply: ") + e.what());
  }
}

Eigen::VectorXd RemoteBackend::importance(const HighlightMask& mask) const {
  try {
    return vector_from(
        result("importance", {{"exemplar_id", mask.exemplar_id}, {"mask", mask.to_rows()}}).at("weights"));
  } catch (const json::exception& e) {
    throw BackendError(std::string("importance: malformed reply: ") + e.what());
  }
}

}  // namespace stylescout
