#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace zoneprior {

struct CaseEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path label_path;
};

/// Dataset manifest: {"cases": [{id, image_path, label_path}, ...]}.
/// Relative paths are resolved against the manifest's directory on load.
struct Manifest {
  std::vector<CaseEntry> cases;

  const CaseEntry& find(const std::string& id) const;
};

Manifest load_manifest(const std::filesystem::path& path);

/// Paths under the manifest's directory are stored relative to it.
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Write-to-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace zoneprior
