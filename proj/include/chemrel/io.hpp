#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace chemrel::io {

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Files staged in a scratch area and moved into place together by commit().
/// Nothing reaches the destination if commit() is never called.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path directory);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  void add(const std::string& name, std::string contents);
  void commit();
  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  std::filesystem::path directory_;
  std::vector<std::pair<std::string, std::string>> files_;
};

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256(std::string_view data);

}  // namespace chemrel::io
