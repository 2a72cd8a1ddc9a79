#include "config_args.hpp"

#include <fstream>
#include <set>

#include "xva/error.hpp"

namespace xva::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_dashes(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  return key;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config file not found: " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    auto key = strip_dashes(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    }
    entries.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return entries;
}

std::vector<std::string> expand_config(
    const std::vector<std::string>& args,
    const std::function<OptionKind(const std::string&)>& classify,
    const std::function<void(const std::string&)>& warn) {
  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(key);
    if (key == "config") {
      if (eq != std::string::npos) {
        config_path = a.substr(eq + 1);
      } else if (i + 1 < args.size()) {
        config_path = args[i + 1];
      }
    }
  }
  if (config_path.empty()) return args;

  std::vector<std::string> out = args;
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (given.count(key) != 0) continue;
    switch (classify(key)) {
      case OptionKind::kUnknown:
        warn("config key '" + key + "' does not apply to this command; ignored");
        break;
      case OptionKind::kFlag:
        if (value == "true" || value == "1" || value == "yes") {
          out.push_back("--" + key);
        } else if (value != "false" && value != "0" && value != "no") {
          throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
        }
        break;
      case OptionKind::kValue:
        out.push_back("--" + key);
        out.push_back(value);
        break;
    }
    given.insert(key);
  }
  return out;
}

}  // namespace xva::cli
