#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iplforge {

// Splits UTF-8 text into one string per codepoint. Bytes that do not form a
// valid UTF-8 sequence raise DataError rather than being passed through.
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace iplforge
