#include "sscnet/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace sscnet::io {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

fs::path sidecar_of(const fs::path& counts) { return fs::path(counts.string() + ".json"); }

std::string path_string(const fs::path& p) { return p.generic_string(); }

}  // namespace

void CsvTable::fail(std::size_t row, const std::string& message) const {
  throw Error(ErrorCode::FormatError, fmt::format("{}:{}: {}", source, lines.at(row), message));
}

std::int64_t CsvTable::integer(std::size_t row, std::size_t column) const {
  const auto& field = rows[row][column];
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    fail(row, fmt::format("column {} is not an integer: '{}'", column + 1, field));
  }
  return value;
}

double CsvTable::real(std::size_t row, std::size_t column) const {
  const auto& field = rows[row][column];
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    fail(row, fmt::format("column {} is not a finite number: '{}'", column + 1, field));
  }
  return value;
}

CsvTable parse_csv(std::string_view text, std::span<const std::string_view> header, const std::string& source) {
  CsvTable table;
  table.source = source;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!seen_header) {
      seen_header = true;
      if (!header.empty()) {
        const bool same = fields.size() == header.size() && std::equal(fields.begin(), fields.end(), header.begin());
        if (!same) {
          std::string expected;
          for (auto h : header) expected += (expected.empty() ? "" : ",") + std::string(h);
          throw Error(ErrorCode::FormatError, fmt::format("{}:{}: expected header '{}'", source, number, expected));
        }
        continue;
      }
    }
    if (!header.empty() && fields.size() != header.size()) {
      throw Error(ErrorCode::FormatError,
                  fmt::format("{}:{}: expected {} fields, found {}", source, number, header.size(), fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(number);
  }
  if (!seen_header) throw Error(ErrorCode::FormatError, source + ": file is empty");
  return table;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path_string(path));
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path_string(path));
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path_string(path) + ": " + e.what());
  }
}

CsvTable read_csv(const fs::path& path, std::span<const std::string_view> header) {
  return parse_csv(read_text(path), header, path_string(path));
}

VoxelGrid read_grid(const fs::path& path) {
  static constexpr std::string_view header[] = {"voxel_id", "x", "y", "z"};
  const auto table = read_csv(path, header);
  std::vector<Coordinate> coords;
  std::vector<std::int64_t> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ids.push_back(table.integer(r, 0));
    coords.push_back({table.real(r, 1), table.real(r, 2), table.real(r, 3)});
  }
  if (ids.size() < 2) throw Error(ErrorCode::FormatError, path_string(path) + ": a grid needs at least 2 voxels");
  try {
    return VoxelGrid(std::move(coords), std::move(ids));
  } catch (const Error& e) {
    throw Error(ErrorCode::FormatError, path_string(path) + ": " + e.what());
  }
}

std::string grid_csv(const VoxelGrid& grid) {
  std::string out = "voxel_id,x,y,z\n";
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coordinate(VoxelId(v));
    out += fmt::format("{},{},{},{}\n", grid.external_id(VoxelId(v)), c[0], c[1], c[2]);
  }
  return out;
}

std::vector<MaskDeclaration> read_masks(const fs::path& path, const VoxelGrid& grid) {
  static constexpr std::string_view header[] = {"component", "voxel_id"};
  const auto table = read_csv(path, header);
  std::vector<MaskDeclaration> out;
  std::map<std::string, std::size_t> position;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& label = table.rows[r][0];
    if (label.empty()) table.fail(r, "component label is empty");
    auto [it, inserted] = position.emplace(label, out.size());
    if (inserted) out.push_back({label, {}});
    if (table.rows[r][1].empty()) continue;
    const auto external = table.integer(r, 1);
    VoxelId v = 0;
    try {
      v = grid.index_of(external);
    } catch (const Error&) {
      table.fail(r, fmt::format("voxel {} is not on the grid", external));
    }
    auto& members = out[it->second].members;
    if (std::find(members.begin(), members.end(), v) != members.end()) {
      table.fail(r, fmt::format("voxel {} listed twice for {}", external, label));
    }
    members.push_back(v);
  }
  return out;
}

std::string masks_csv(std::span<const ComponentMask> masks, const VoxelGrid& grid) {
  std::string out = "component,voxel_id\n";
  for (const auto& m : masks) {
    for (VoxelId v : m.members()) out += fmt::format("{},{}\n", m.label(), grid.external_id(v));
  }
  return out;
}

StreamCounts read_counts(const fs::path& path, const VoxelGrid& grid, std::optional<std::uint32_t> fallback_streams) {
  std::optional<std::uint32_t> streams = fallback_streams;
  const auto sidecar = sidecar_of(path);
  if (fs::exists(sidecar)) {
    const auto j = read_json(sidecar);
    if (!j.is_object() || !j.contains("streams_per_seed") || !j["streams_per_seed"].is_number_unsigned() ||
        j.size() != 1) {
      throw Error(ErrorCode::FormatError,
                  path_string(sidecar) + ": expected exactly {\"streams_per_seed\": <positive integer>}");
    }
    streams = j["streams_per_seed"].get<std::uint32_t>();
  }
  if (!streams || *streams == 0) {
    throw Error(ErrorCode::FormatError, path_string(path) + ": streams per seed unknown (missing " +
                                            path_string(sidecar) + ")");
  }
  static constexpr std::string_view header[] = {"seed", "target", "count"};
  const auto table = read_csv(path, header);
  std::vector<CountRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto seed = table.integer(r, 0);
    const auto target = table.integer(r, 1);
    const auto count = table.integer(r, 2);
    if (count < 0) table.fail(r, "negative count");
    if (count > std::int64_t(*streams)) {
      throw Error(ErrorCode::CountOverflow, fmt::format("{}:{}: count {} exceeds {} streams per seed",
                                                        table.source, table.lines[r], count, *streams));
    }
    if (seed == target) table.fail(r, "seed and target are the same voxel");
    VoxelId a = 0, b = 0;
    try {
      a = grid.index_of(seed);
      b = grid.index_of(target);
    } catch (const Error&) {
      table.fail(r, fmt::format("voxel {} or {} is not on the grid", seed, target));
    }
    records.push_back({a, b, std::uint32_t(count)});
  }
  return ingest_counts(records, grid.size(), *streams);
}

std::string counts_csv(const StreamCounts& counts, const VoxelGrid& grid) {
  std::string out = "seed,target,count\n";
  for (const auto& e : counts.entries()) {
    if (e.count == 0) continue;
    const auto [a, b] = counts.index().to_pair(e.pair);
    out += fmt::format("{},{},{}\n", grid.external_id(a), grid.external_id(b), e.count);
  }
  return out;
}

void write_counts(const fs::path& path, const StreamCounts& counts, const VoxelGrid& grid) {
  write_text(path, counts_csv(counts, grid));
  write_text(sidecar_of(path), nlohmann::json{{"streams_per_seed", counts.streams_per_seed()}}.dump() + "\n");
}

std::vector<int> read_partition(const fs::path& path, const VoxelGrid& grid) {
  static constexpr std::string_view header[] = {"voxel_id", "region"};
  const auto table = read_csv(path, header);
  std::vector<int> out(grid.size(), -1);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto external = table.integer(r, 0);
    const auto region = table.integer(r, 1);
    if (region < 0) table.fail(r, "region labels must be >= 0");
    VoxelId v = 0;
    try {
      v = grid.index_of(external);
    } catch (const Error&) {
      table.fail(r, fmt::format("voxel {} is not on the grid", external));
    }
    if (out[std::size_t(v)] >= 0) table.fail(r, fmt::format("voxel {} assigned twice", external));
    out[std::size_t(v)] = int(region);
  }
  return out;
}

Eigen::MatrixXd read_fmri(const fs::path& path, const VoxelGrid& grid) {
  const auto table = read_csv(path, {});
  if (table.rows.size() < 2) throw Error(ErrorCode::FormatError, path_string(path) + ": no time points");
  const auto& head = table.rows.front();
  if (head.size() != grid.size()) {
    table.fail(0, fmt::format("header lists {} voxels, the grid has {}", head.size(), grid.size()));
  }
  std::vector<VoxelId> column_voxel(head.size());
  std::vector<char> seen(grid.size(), 0);
  for (std::size_t c = 0; c < head.size(); ++c) {
    const auto external = table.integer(0, c);
    VoxelId v = 0;
    try {
      v = grid.index_of(external);
    } catch (const Error&) {
      table.fail(0, fmt::format("voxel {} is not on the grid", external));
    }
    if (seen[std::size_t(v)]++) table.fail(0, fmt::format("voxel {} appears twice", external));
    column_voxel[c] = v;
  }
  Eigen::MatrixXd y(Eigen::Index(table.rows.size() - 1), Eigen::Index(grid.size()));
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != head.size()) {
      table.fail(r, fmt::format("expected {} values, found {}", head.size(), table.rows[r].size()));
    }
    for (std::size_t c = 0; c < head.size(); ++c) y(Eigen::Index(r - 1), column_voxel[c]) = table.real(r, c);
  }
  return y;
}

std::string fmri_csv(const Eigen::MatrixXd& fmri, const VoxelGrid& grid) {
  std::string out;
  for (std::size_t v = 0; v < grid.size(); ++v) out += fmt::format("{}{}", v ? "," : "", grid.external_id(VoxelId(v)));
  out += "\n";
  for (Eigen::Index t = 0; t < fmri.rows(); ++t) {
    for (Eigen::Index v = 0; v < fmri.cols(); ++v) out += fmt::format("{}{:.17g}", v ? "," : "", fmri(t, v));
    out += "\n";
  }
  return out;
}

Manifest Manifest::load(const fs::path& path) {
  const auto j = read_json(path);
  const auto base = path.parent_path();
  const auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::ConfigError, path_string(path) + ": " + what);
  };
  if (!j.is_object()) bad("manifest must be a JSON object");
  static const std::vector<std::string> known{"grid", "masks", "partition", "streams_per_seed", "subjects"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) bad("unknown key '" + key + "'");
  }
  const auto text = [&](const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_string()) bad(std::string("'") + key + "' must be a string");
    return obj[key].get<std::string>();
  };
  Manifest m;
  m.grid = resolve(base, text(j, "grid"));
  m.masks = resolve(base, text(j, "masks"));
  if (j.contains("partition")) m.partition = resolve(base, text(j, "partition"));
  if (j.contains("streams_per_seed")) {
    if (!j["streams_per_seed"].is_number_unsigned()) bad("'streams_per_seed' must be a positive integer");
    m.streams_per_seed = j["streams_per_seed"].get<std::uint32_t>();
  }
  if (!j.contains("subjects") || !j["subjects"].is_array() || j["subjects"].empty()) bad("'subjects' must be a non-empty array");
  for (const auto& s : j["subjects"]) {
    if (!s.is_object()) bad("each subject must be an object");
    for (const auto& [key, value] : s.items()) {
      if (key != "id" && key != "group" && key != "counts" && key != "fmri") bad("unknown subject key '" + key + "'");
    }
    ManifestSubject subject;
    subject.id = text(s, "id");
    subject.group = s.contains("group") ? text(s, "group") : std::string();
    subject.counts = resolve(base, text(s, "counts"));
    if (s.contains("fmri")) subject.fmri = resolve(base, text(s, "fmri"));
    for (const auto& other : m.subjects) {
      if (other.id == subject.id) bad("subject '" + subject.id + "' listed twice");
    }
    m.subjects.push_back(std::move(subject));
  }
  return m;
}

nlohmann::json Manifest::to_json(const fs::path& base) const {
  const auto rel = [&](const fs::path& p) { return path_string(p.lexically_relative(base)); };
  nlohmann::json j;
  j["grid"] = rel(grid);
  j["masks"] = rel(masks);
  if (partition) j["partition"] = rel(*partition);
  if (streams_per_seed) j["streams_per_seed"] = *streams_per_seed;
  j["subjects"] = nlohmann::json::array();
  for (const auto& s : subjects) {
    nlohmann::json e{{"id", s.id}, {"group", s.group}, {"counts", rel(s.counts)}};
    if (s.fmri) e["fmri"] = rel(*s.fmri);
    j["subjects"].push_back(e);
  }
  return j;
}

LoadedStudy load_study(const Manifest& manifest, bool with_fmri) {
  LoadedStudy study{read_grid(manifest.grid), {}, std::nullopt, {}};
  study.masks = read_masks(manifest.masks, study.grid);
  if (manifest.partition) study.partition = read_partition(*manifest.partition, study.grid);
  for (const auto& s : manifest.subjects) {
    SubjectDataset d{s.id, s.group, read_counts(s.counts, study.grid, manifest.streams_per_seed), std::nullopt};
    if (with_fmri) {
      if (!s.fmri) throw Error(ErrorCode::ConfigError, "subject '" + s.id + "' has no fMRI file");
      d.fmri = read_fmri(*s.fmri, study.grid);
    }
    study.subjects.push_back(std::move(d));
  }
  return study;
}

}  // namespace sscnet::io
