#pragma once

#include <string>

#include "biasbound/report.hpp"

namespace httplib {
class Server;
}

namespace bb {

/// GET /api/report, POST /api/perturb, GET /api/trapezoid. The report is
/// validated before any route is registered.
void register_routes(httplib::Server& server, const json& report);

/// Blocks until the server stops. Returns false if the port cannot be bound.
bool serve(const json& report, const std::string& host, int port);

}  // namespace bb
