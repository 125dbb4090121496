#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace prov {

// SHA-256 digest of the given bytes, rendered as 64 lowercase hex chars.
// This is the single content digest used across the project.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
// Throws Error(MalformedInput) on bad input.
std::string base64_decode(std::string_view text);

// Fresh 128-bit identifier in canonical hex-with-hyphens form
// (8-4-4-4-12, lowercase). Thread-safe.
std::string new_item_id();

// Milliseconds since the Unix epoch, UTC.
std::int64_t now_millis();

// "YYYY-MM-DDTHH:MM:SS.mmmZ" for the given epoch milliseconds.
std::string format_utc_millis(std::int64_t millis);

}  // namespace prov
