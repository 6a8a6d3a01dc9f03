#include "biasbound/service.hpp"

#include <httplib.h>

#include <iostream>
#include <memory>

#include "biasbound/error.hpp"

namespace bb {

namespace {

bool local_origin(const std::string& origin) {
  for (const char* prefix : {"http://localhost", "http://127.0.0.1", "https://localhost", "https://127.0.0.1"}) {
    const std::string p(prefix);
    if (origin.rfind(p, 0) == 0 && (origin.size() == p.size() || origin[p.size()] == ':')) return true;
  }
  return false;
}

void allow_origin(const httplib::Request& req, httplib::Response& res) {
  const std::string origin = req.get_header_value("Origin");
  if (!origin.empty() && local_origin(origin)) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  const int status = err && err->is_numerical() ? 422 : 400;
  send_json(res, status, {{"error", e.what()}});
}

}  // namespace

void register_routes(httplib::Server& server, const json& report) {
  validate_report(report);
  auto shared = std::make_shared<const json>(report);

  server.Options(R"(/api/.*)", [](const httplib::Request& req, httplib::Response& res) {
    allow_origin(req, res);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/api/report", [shared](const httplib::Request& req, httplib::Response& res) {
    allow_origin(req, res);
    send_json(res, 200, *shared);
  });

  server.Post("/api/perturb", [shared](const httplib::Request& req, httplib::Response& res) {
    allow_origin(req, res);
    try {
      const json body = json::parse(req.body);
      send_json(res, 200, perturb(*shared, body));
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    } catch (const std::exception& e) {
      send_error(res, e);
    }
  });

  server.Get("/api/trapezoid", [shared](const httplib::Request& req, httplib::Response& res) {
    allow_origin(req, res);
    try {
      const std::string family = req.has_param("family") ? req.get_param_value("family") : "ks";
      std::optional<double> alpha;
      if (req.has_param("alpha")) {
        const std::string a = req.get_param_value("alpha");
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(a, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != a.size() || !(v > 0.0 && v < 1.0))
          throw Error(ErrorKind::validation, "cli_service", "alpha must be a number in (0, 1)");
        alpha = v;
      }
      send_json(res, 200, trapezoid(*shared, family, alpha));
    } catch (const std::exception& e) {
      send_error(res, e);
    }
  });
}

bool serve(const json& report, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, report);
  std::cerr << "serving on http://" << host << ":" << port << "\n";
  return server.listen(host, port);
}

}  // namespace bb
