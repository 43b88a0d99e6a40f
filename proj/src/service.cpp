#include "stylescout/service.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <httplib.h>

#include "stylescout/error.hpp"
#include "stylescout/wire.hpp"

namespace stylescout {

using nlohmann::json;

// ---------------------------------------------------------------- config

ServiceConfig ServiceConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("service config must be an object");
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.backend = j.value("backend", c.backend);
    c.backend_command = j.value("backend_command", c.backend_command);
    c.synthetic.model_seed = j.value("model_seed", c.synthetic.model_seed);
    c.log_path = j.value("log", c.log_path);
    json defaults = j.value("defaults", json::object());
    if (j.contains("seed")) defaults["seed"] = j["seed"];
    c.defaults = SessionConfig::from_json(defaults);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw InvalidArgument("service config: port out of range");
  if (c.backend != "synthetic" && c.backend != "process") {
    throw InvalidArgument("service config: backend must be 'synthetic' or 'process'");
  }
  if (c.backend == "process" && c.backend_command.empty()) {
    throw InvalidArgument("service config: 'process' backend needs backend_command");
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config file " + path + ": " + e.what());
  }
  return from_json(j);
}

std::unique_ptr<GeneratorBackend> make_backend(const ServiceConfig& config) {
  if (config.backend == "process") {
    return std::make_unique<RemoteBackend>(std::make_unique<ProcessTransport>(config.backend_command));
  }
  return std::make_unique<SyntheticBackend>(config.synthetic);
}

// ---------------------------------------------------------------- helpers

namespace {

std::string timestamp(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms % 1000 << 'Z';
  return out.str();
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(path.substr(0, path.find('?')));
  while (std::getline(in, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::uint64_t parse_id(const json& j, const char* what) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw InvalidArgument(std::string(what) + " must be a non-negative integer");
}

std::optional<int> optional_int(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_number_integer()) throw InvalidArgument(std::string(key) + " must be an integer");
  return body[key].get<int>();
}

std::optional<double> optional_number(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_number()) throw InvalidArgument(std::string(key) + " must be a number");
  return body[key].get<double>();
}

json subset_summary(const Session& session) {
  const auto& subset = session.subset();
  const Eigen::Index dim = session.backend().meta().dim;
  return {{"size", subset.indices.size()},
          {"full", subset.is_full(dim)},
          {"indices", subset.indices},
          {"importance", std::vector<double>(subset.importance.data(), subset.importance.data() + subset.importance.size())}};
}

int status_for(const std::exception& e) {
  if (dynamic_cast<const NotFound*>(&e)) return 404;
  if (dynamic_cast<const StaleRevision*>(&e)) return 409;
  if (dynamic_cast<const InvalidArgument*>(&e)) return 422;
  if (dynamic_cast<const BackendError*>(&e)) return 502;
  if (dynamic_cast<const json::exception*>(&e)) return 422;
  return 500;
}

const char* code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->code();
  if (dynamic_cast<const json::exception*>(&e)) return "invalid_argument";
  return "internal";
}

}  // namespace

// ---------------------------------------------------------------- service

Service::Service(const GeneratorBackend& backend, SessionConfig defaults, std::ostream* log)
    : backend_(backend), defaults_(std::move(defaults)), log_(log) {
  defaults_.validate();
}

std::size_t Service::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<Service::Live> Service::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session: " + id);
  return it->second;
}

std::string Service::add(Session session) {
  auto live = std::make_shared<Live>(std::move(session));
  live->created = live->updated = std::chrono::system_clock::now();
  std::string id;
  {
    std::unique_lock lock(sessions_mutex_);
    id = "s" + std::to_string(next_session_++);
  }
  publish(id, *live);  // not yet visible to other requests
  std::unique_lock lock(sessions_mutex_);
  sessions_.emplace(id, live);
  return id;
}

const std::string& Service::thumbnail(Live& live, DirectionId id) const {
  auto it = live.thumbnails.find(id);
  if (it != live.thumbnails.end()) return it->second;
  const Session& s = live.session;
  const StyleVector values =
      compose(s.base(), s.direction(id), Strength(s.config().default_strength, s.backend().meta().lambda_max));
  return live.thumbnails.emplace(id, image_to_base64_png(s.backend().generate(values))).first->second;
}

json Service::node_view(Live& live, NodeId id, bool thumbnails) const {
  const TreeNode& n = live.session.tree().node(id);
  json clusters = json::array();
  for (const auto& c : n.clusters) {
    json jc = {{"id", c.id},
               {"size", c.member_ids.size()},
               {"member_ids", c.member_ids},
               {"representative_id", c.representative_id}};
    if (thumbnails) jc["thumbnail"] = thumbnail(live, c.representative_id);
    clusters.push_back(std::move(jc));
  }
  return {{"id", n.id},
          {"parent", n.parent ? json(*n.parent) : json(nullptr)},
          {"children", n.children},
          {"gathered_cluster_ids", n.gathered_cluster_ids},
          {"gathered_direction_ids", n.gathered_direction_ids},
          {"k", n.k},
          {"pool", n.pool},
          {"clusters", std::move(clusters)}};
}

void Service::publish(const std::string& id, Live& live) {
  const Session& s = live.session;
  const auto& tree = s.tree();
  json nodes = json::array();
  for (const auto& [node_id, node] : tree.nodes()) nodes.push_back(node_view(live, node_id, false));
  json field = json::array();
  for (const auto& row : s.test_field()) {
    field.push_back({{"base_id", row.base_id}, {"direction_id", row.direction_id}, {"lambda", row.lambda}});
  }
  json exemplars = json::array();
  for (const auto& e : s.backend().meta().exemplars) exemplars.push_back(e.id);

  json state = {{"session_id", id},
                {"revision", live.revision},
                {"created", timestamp(live.created)},
                {"updated", timestamp(live.updated)},
                {"node_id", tree.empty() ? json(nullptr) : json(tree.current())},
                {"config", s.config().to_json()},
                {"lambda_max", s.backend().meta().lambda_max},
                {"exemplars", std::move(exemplars)},
                {"subset", subset_summary(s)},
                {"tree",
                 {{"root", tree.empty() ? json(nullptr) : json(tree.root())},
                  {"current", tree.empty() ? json(nullptr) : json(tree.current())},
                  {"nodes", std::move(nodes)}}},
                {"current", tree.empty() ? json(nullptr) : node_view(live, tree.current(), true)},
                {"bookmarks", s.bookmarks()},
                {"test_field", std::move(field)}};
  auto snapshot = std::make_shared<const Snapshot>(Snapshot{state.dump(), s.export_json(), live.revision});
  std::atomic_store(&live.snapshot, std::move(snapshot));
}

std::shared_ptr<const Service::Snapshot> Service::snapshot(const std::string& id) const {
  return std::atomic_load(&find(id)->snapshot);
}

Service::Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto start = std::chrono::steady_clock::now();
  Response response;
  std::string session_id;
  try {
    json parsed = json::object();
    if (!body.empty()) {
      try {
        parsed = json::parse(body);
      } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("body is not JSON: ") + e.what());
      }
    }
    std::string raw;
    const json result = route(method, split_path(path), parsed, raw, session_id);
    response.body = raw.empty() ? result.dump() : std::move(raw);
  } catch (const std::exception& e) {
    response.status = status_for(e);
    response.body = json{{"error", {{"code", code_for(e)}, {"message", e.what()}}}}.dump();
  }
  if (log_) {
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    json line = {{"ts", timestamp(std::chrono::system_clock::now())},
                 {"method", method},
                 {"path", path},
                 {"status", response.status},
                 {"ms", std::round(ms * 1000.0) / 1000.0}};
    if (!session_id.empty()) line["session"] = session_id;
    std::lock_guard lock(log_mutex_);
    *log_ << line.dump() << '\n';
    log_->flush();
  }
  return response;
}

json Service::route(const std::string& method, const std::vector<std::string>& parts, const json& body,
                    std::string& raw, std::string& session_id) {
  if (parts.empty() || parts[0] != "sessions") throw NotFound("no such route");
  if (!body.is_object()) throw InvalidArgument("body must be a JSON object");

  if (parts.size() == 1) {
    if (method == "GET") {
      std::shared_lock lock(sessions_mutex_);
      json ids = json::array();
      for (const auto& [id, live] : sessions_) ids.push_back(id);
      return {{"sessions", std::move(ids)}};
    }
    if (method != "POST") throw NotFound("no such route");
    if (body.contains("backend") && body["backend"] != "default") {
      throw InvalidArgument("this service runs a single backend; omit 'backend' or pass \"default\"");
    }
    json config = defaults_.to_json();
    if (body.contains("config")) {
      if (!body["config"].is_object()) throw InvalidArgument("config must be an object");
      config.update(body["config"]);
    }
    if (body.contains("seed")) config["seed"] = body["seed"];
    session_id = add(Session(backend_, SessionConfig::from_json(config)));
    raw = snapshot(session_id)->state;
    return {};
  }

  if (parts.size() == 2 && parts[1] == "import") {
    if (method != "POST") throw NotFound("no such route");
    session_id = add(Session::from_json(backend_, body));
    raw = snapshot(session_id)->state;
    return {};
  }

  session_id = parts[1];
  const std::shared_ptr<Live> live = find(session_id);
  const std::string action = parts.size() > 2 ? parts[2] : "";
  if (parts.size() > 3) throw NotFound("no such route");

  // Reads: served from the published snapshot without touching the session.
  if (method == "GET") {
    const auto snap = std::atomic_load(&live->snapshot);
    if (action.empty()) {
      raw = snap->state;
      return {};
    }
    if (action == "export") {
      raw = snap->export_json;
      return {};
    }
    if (action == "bookmarks") {
      const json state = json::parse(snap->state);
      return {{"session_id", session_id},
              {"revision", snap->revision},
              {"node_id", state["node_id"]},
              {"bookmarks", state["bookmarks"]}};
    }
    throw NotFound("no such route");
  }

  std::lock_guard write(live->write);
  Session& s = live->session;
  if (body.contains("revision") && !body["revision"].is_null()) {
    const std::uint64_t expected = parse_id(body["revision"], "revision");
    if (expected != live->revision) {
      throw StaleRevision("stale revision " + std::to_string(expected) + ", session is at " +
                          std::to_string(live->revision));
    }
  }

  const auto node_id = [&]() -> NodeId {
    if (body.contains("node_id") && !body["node_id"].is_null()) return parse_id(body["node_id"], "node_id");
    if (s.tree().empty()) throw InvalidArgument("session has no nodes yet; sample first");
    return s.tree().current();
  };

  json result;
  bool mutated = true;
  if (method == "POST" && action == "highlight") {
    std::vector<HighlightMask> masks;
    if (!body.contains("masks") || !body["masks"].is_array()) throw InvalidArgument("masks must be an array");
    for (const auto& m : body["masks"]) {
      masks.push_back(HighlightMask::from_rows(m.at("exemplar_id").get<std::string>(),
                                               m.at("rows").get<std::vector<std::string>>()));
    }
    s.highlight(masks);
    result["subset"] = subset_summary(s);
  } else if (method == "POST" && action == "sample") {
    result["node"] = node_view(*live, s.sample(optional_int(body, "n"), optional_int(body, "k")), true);
  } else if (method == "POST" && action == "scatter") {
    if (!body.contains("gathered_cluster_ids") || !body["gathered_cluster_ids"].is_array()) {
      throw InvalidArgument("gathered_cluster_ids must be an array");
    }
    std::vector<int> gathered;
    for (const auto& c : body["gathered_cluster_ids"]) {
      if (!c.is_number_integer()) throw InvalidArgument("cluster ids must be integers");
      gathered.push_back(c.get<int>());
    }
    result["node"] = node_view(*live, s.scatter(gathered, optional_int(body, "n"), optional_int(body, "k")), true);
  } else if (method == "POST" && action == "back") {
    result["node"] = node_view(*live, s.back(), true);
  } else if (method == "POST" && action == "clusters") {
    const auto k = optional_int(body, "k");
    if (!k) throw InvalidArgument("k is required");
    result["node"] = node_view(*live, s.set_cluster_count(node_id(), *k).id, true);
  } else if (method == "POST" && action == "more") {
    result["node"] = node_view(*live, s.resample(node_id(), optional_int(body, "n")).id, true);
  } else if (method == "POST" && (action == "test" || action == "render")) {
    if (!body.contains("direction_id")) throw InvalidArgument("direction_id is required");
    const DirectionId d = parse_id(body["direction_id"], "direction_id");
    const std::string base_id = body.value("base_id", s.config().base_exemplar);
    const auto lambda = optional_number(body, "lambda");
    Image image;
    if (action == "test") {
      image = s.test(d, base_id, lambda);
      for (const auto& row : s.test_field()) {
        if (row.base_id == base_id) result["lambda"] = row.lambda;
      }
    } else {
      // Preview without recording a test row.
      mutated = false;
      const Strength strength(lambda.value_or(s.config().default_strength), s.backend().meta().lambda_max);
      image = s.backend().generate(compose(s.backend().meta().exemplar(base_id).values, s.direction(d), strength));
      result["lambda"] = strength.value();
    }
    result["direction_id"] = d;
    result["base_id"] = base_id;
    result["image"] = image_to_base64_png(image);
  } else if (action == "bookmarks" && (method == "POST" || method == "DELETE")) {
    if (!body.contains("direction_id")) throw InvalidArgument("direction_id is required");
    const DirectionId d = parse_id(body["direction_id"], "direction_id");
    if (method == "POST") {
      s.bookmark(d);
    } else {
      s.unbookmark(d);
    }
    result["bookmarks"] = s.bookmarks();
  } else {
    throw NotFound("no such route");
  }

  if (mutated) {
    ++live->revision;
    live->updated = std::chrono::system_clock::now();
    publish(session_id, *live);
  }
  result["session_id"] = session_id;
  result["revision"] = live->revision;
  result["node_id"] = s.tree().empty() ? json(nullptr) : json(s.tree().current());
  return result;
}

void Service::bind(httplib::Server& server) {
  const auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const Response r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
  server.Delete(R"(/.*)", forward);
}

int run_service(const ServiceConfig& config) {
  const auto backend = make_backend(config);
  std::ofstream file;
  std::ostream* log = &std::cerr;
  if (!config.log_path.empty()) {
    file.open(config.log_path, std::ios::app);
    if (!file) throw InvalidArgument("cannot open log file: " + config.log_path);
    log = &file;
  }
  Service service(*backend, config.defaults, log);
  httplib::Server server;
  service.bind(server);
  int port = config.port;
  if (port == 0) {
    port = server.bind_to_any_port(config.host);
  } else if (!server.bind_to_port(config.host, port)) {
    std::cerr << "cannot bind " << config.host << ':' << port << '\n';
    return 1;
  }
  std::cerr << "listening on http://" << config.host << ':' << port << '\n';
  return server.listen_after_bind() ? 0 : 1;
}

}  // namespace stylescout
