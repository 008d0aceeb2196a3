#include "ptune/error.hpp"
#include "ptune/serialize.hpp"
#include "ptune/session.hpp"

#include <spdlog/spdlog.h>
// Last: resolv.h (pulled in by httplib) defines _res, which collides with Eigen parameter names.
#include <httplib.h>

namespace ptune::session {

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, {{"error", code}, {"message", message}}, status);
}

// Runs a handler and maps library errors onto HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "SchemaMismatch", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, "Internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("request body: ") + e.what());
  }
}

json outcome_json(const RegenerateOutcome& o) {
  json vaf = json::object();
  for (const auto& [joint, v] : o.vaf) vaf[std::string(to_string(joint))] = v;
  return {{"regenerated", o.regenerated}, {"wall_time_s", o.wall_time_s}, {"vaf", vaf},
          {"model_vaf", o.model_vaf},     {"hash", o.hash},               {"version", o.version}};
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;

  explicit Impl(Service& s) : service(s) { routes(); }

  void routes() {
    server.Get("/profiles", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& p : service.profiles().list()) {
        list.push_back({{"id", p.id}, {"name", p.name}, {"version", p.version}, {"created_at", p.created_at}});
      }
      send_json(res, list);
    }));

    server.Get(R"(/profiles/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, io::to_json(service.profiles().load(req.matches[1])));
    }));

    server.Post("/profiles", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      if (!body.contains("created_at") || body["created_at"].get<std::string>().empty()) body["created_at"] = utc_timestamp();
      send_json(res, {{"id", service.profiles().save(body)}}, 201);
    }));

    server.Get("/bundle/current", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto bundle = service.current();
      json out = io::to_json(*bundle);
      out["hash"] = bundle->hash();
      json vaf = json::object();
      for (const auto& [joint, v] : bundle->vaf_per_joint()) vaf[std::string(to_string(joint))] = v;
      out["vaf"] = vaf;
      send_json(res, out);
    }));

    server.Post("/bundle/regenerate", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const json& profile_json = body.contains("profile") ? body.at("profile") : body;
      TuningProfile profile;
      try {
        profile = io::profile_from_json(profile_json);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::OutOfBounds || e.code() == ErrorCode::SchemaMismatch) {
          throw Error(ErrorCode::ValidationFailed, e.what());
        }
        throw;
      }
      const std::string note = body.contains("note") ? body.at("note").get<std::string>() : "";
      send_json(res, outcome_json(service.regenerate(profile, note)));
    }));

    server.Get("/preview/torques", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("task") || !req.has_param("joint")) {
        throw Error(ErrorCode::InvalidArgument, "preview needs task and joint query parameters");
      }
      Task task;
      Joint joint;
      try {
        task = parse_task(req.get_param_value("task"));
        joint = joint_from_string(req.get_param_value("joint"));
      } catch (const Error& e) {
        throw Error(ErrorCode::InvalidArgument, e.what());
      }
      send_json(res, service.preview(task, joint));
    }));

    server.Post("/bundle/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      std::optional<fs::path> path;
      if (body.contains("path")) path = fs::path(body.at("path").get<std::string>());
      const ExportResult r = service.export_current(path);
      send_json(res, {{"path", r.path.string()}, {"digest", r.digest}, {"bytes", r.bytes}});
    }));

    server.Get("/session/log", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& e : service.log().entries()) list.push_back(to_json(e));
      send_json(res, list);
    }));

    server.Get(R"(/presets/([A-Za-z_]+)/([A-Za-z]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Parameter p = parameter_from_string(req.matches[1].str());
      const PresetLevel level = preset_level_from_string(req.matches[2].str());
      send_json(res, io::to_json(preset_profile(p, level)));
    }));
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace ptune::session
