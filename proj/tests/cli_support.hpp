#pragma once

// Runs the meb executable on fixture configs and reads its outputs.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meb/ingest.hpp"
#include "meb/records.hpp"

namespace meb::testing {

struct CliResult {
  int exit_code = -1;
  std::string output;  ///< stdout and stderr interleaved
};

inline std::string fixture(const std::string& name) { return std::string(MEB_FIXTURE_DIR) + "/" + name; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("meb_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

inline CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MEB_CLI_PATH + "\" " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline CliResult run_fixture(const std::string& sub, const std::string& config, const std::filesystem::path& out,
                             const std::string& extra = "") {
  return run_cli(sub + " --config \"" + fixture(config) + "\" --out \"" + out.string() + "\" " + extra);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Numeric CSV table: header names and rows.
inline Observations read_table(const std::filesystem::path& p) {
  ReadOptions opt;
  opt.malformed = MalformedPolicy::error;
  return read_observations(p.string(), opt);
}

/// Lists files of a directory with their contents, sorted by name.
inline std::vector<std::pair<std::string, std::string>> directory_contents(const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.emplace_back(e.path().filename().string(), slurp(e.path()));
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace meb::testing
