#include "zoneprior/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zoneprior/errors.hpp"

namespace zoneprior {

namespace fs = std::filesystem;
using nlohmann::json;

const CaseEntry& Manifest::find(const std::string& id) const {
  for (const auto& c : cases)
    if (c.id == id) return c;
  throw ValidationError("case '" + id + "' not in manifest");
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  const json& list = doc.is_array() ? doc : doc.value("cases", json::array());
  const fs::path base = path.parent_path();
  Manifest m;
  try {
    for (const auto& item : list) {
      CaseEntry c;
      c.id = item.at("id").get<std::string>();
      c.image_path = item.at("image_path").get<std::string>();
      c.label_path = item.at("label_path").get<std::string>();
      if (c.image_path.is_relative()) c.image_path = base / c.image_path;
      if (c.label_path.is_relative()) c.label_path = base / c.label_path;
      m.cases.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

namespace {

std::string portable(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  const auto rel = p.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

}  // namespace

void save_manifest(const Manifest& m, const fs::path& path) {
  const fs::path base = path.parent_path();
  json list = json::array();
  for (const auto& c : m.cases)
    list.push_back({{"id", c.id},
                    {"image_path", portable(c.image_path, base)},
                    {"label_path", portable(c.label_path, base)}});
  write_file_atomic(path, json{{"cases", list}}.dump(2) + "\n");
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw IoError("parent directory does not exist: " + parent.string());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace zoneprior
