#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace xva::cli {

/// Flat "key = value" file; '#' starts a comment. Keys may carry a
/// leading "--".
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);

enum class OptionKind { kUnknown, kFlag, kValue };

/// Appends config-file entries to `args` as command-line flags, skipping
/// keys already given on the command line (flags win). A flag key adds
/// "--key" when its value is true and nothing when false. Unknown keys
/// are reported through `warn` and dropped.
std::vector<std::string> expand_config(
    const std::vector<std::string>& args,
    const std::function<OptionKind(const std::string& key)>& classify,
    const std::function<void(const std::string&)>& warn);

}  // namespace xva::cli
