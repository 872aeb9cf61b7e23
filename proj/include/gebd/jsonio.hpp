#pragma once

#include <string>

#include <json.hpp>

namespace gebd {

// Insertion-ordered JSON keeps every serialized report/config stable.
using ordered_json = nlohmann::ordered_json;

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::string& path, const std::string& content);

// Throws FormatError carrying the 1-based line number on malformed input.
ordered_json parse_json_text(const std::string& text, const std::string& path);
ordered_json parse_json_file(const std::string& path);

}  // namespace gebd
