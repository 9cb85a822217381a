#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace divprobe {

/// Lowercase hex SHA-256 of `bytes`.
std::string content_hash(std::string_view bytes);

/// Sorted keys, no whitespace, shortest round-trip floats. Platform independent.
std::string canonical_json(const nlohmann::json& value);

inline std::string hash_json(const nlohmann::json& value) { return content_hash(canonical_json(value)); }

}  // namespace divprobe
