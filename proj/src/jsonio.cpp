#include "gebd/jsonio.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gebd/errors.hpp"

namespace gebd {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError(path + ": write failed");
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  write_text_file(tmp, content);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(path + ": atomic rename failed: " + ec.message());
}

namespace {
int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}
}  // namespace

ordered_json parse_json_text(const std::string& text, const std::string& path) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": JSON parse error at line " +
                      std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
  }
}

ordered_json parse_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

}  // namespace gebd
