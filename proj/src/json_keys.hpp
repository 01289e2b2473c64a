#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pcp/error.hpp"

namespace pcp {

/// Throws ValidationError naming the first key of `j` not in `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                const std::string& what) {
  if (!j.is_object()) throw ValidationError(what + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ValidationError(what + ": unknown key '" + key + "'");
  }
}

}  // namespace pcp
