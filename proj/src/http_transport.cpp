// Real HTTP transport, isolated in its own TU because httplib.h is heavy.

#ifdef POPT_WITH_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "promptopt/backends.hpp"
#include "promptopt/errors.hpp"

namespace popt {

Transport make_http_transport(const std::string& base_url) {
  return [base_url](const std::string& path, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers)
             -> TransportResponse {
    httplib::Client client(base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    httplib::Headers hl;
    for (const auto& [k, v] : headers)
      if (k != "Content-Type") hl.emplace(k, v);
    auto res = client.Post(path, hl, body, "application/json");
    if (!res)
      throw std::runtime_error("transport error: " + httplib::to_string(res.error()));
    return TransportResponse{res->status, res->body};
  };
}

}  // namespace popt
