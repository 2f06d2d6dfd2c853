#pragma once

#include <fstream>
#include <string>

namespace syntempo {

std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

// Strips one trailing '\r' (CRLF corpora) and reports whether the line is
// blank after that.
bool is_blank_line(const std::string& line);
std::string chomp(std::string line);

}  // namespace syntempo
