#include <httplib.h>

#include "flightfix/advisor.hpp"
#include "flightfix/errors.hpp"

namespace flightfix {

HttpChatBackend::HttpChatBackend(std::string endpoint, std::string model, std::string api_key, double timeout_s,
                                 double temperature)
    : model_(std::move(model)), api_key_(std::move(api_key)), timeout_s_(timeout_s), temperature_(temperature) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("advisor endpoint must be an http(s) URL");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  base_ = endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
}

nlohmann::json HttpChatBackend::request_body(const RepairPrompt& prompt) const {
  return {{"model", model_},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}})},
          {"temperature", temperature_}};
}

std::string HttpChatBackend::complete(const RepairPrompt& prompt) {
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_bearer_token_auth(api_key_);

  auto res = client.Post(path_, request_body(prompt).dump(), "application/json");
  if (!res) throw TransportError("request to " + base_ + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw TransportError("advisor endpoint returned HTTP " + std::to_string(res->status));

  auto doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_discarded()) throw TransportError("advisor endpoint returned a non-JSON body");
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("advisor reply lacks choices[0].message.content");
  }
}

}  // namespace flightfix
