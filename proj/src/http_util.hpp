#pragma once

#include <string>
#include <string_view>

#include "ori/errors.hpp"

namespace ori::detail {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // leading '/', "/" when absent
};

inline UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ValidationError("malformed URL (missing scheme): " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string_view::npos) {
    parts.origin = std::string(url);
    parts.path = "/";
  } else {
    parts.origin = std::string(url.substr(0, path_start));
    parts.path = std::string(url.substr(path_start));
  }
  if (parts.origin.size() == scheme_end + 3) {
    throw ValidationError("malformed URL (missing host): " + std::string(url));
  }
  return parts;
}

}  // namespace ori::detail
