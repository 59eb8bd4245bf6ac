#include "shiftaudit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shiftaudit/error.hpp"
#include "shiftaudit/rng.hpp"
#include "text_format.hpp"

namespace shiftaudit {
namespace {

using detail::format_number;
using detail::parse_number;
using detail::split_fields;
using detail::strip_cr;

constexpr std::string_view kLabelPrefix = "label.";

// Column layout of a metadata/embedding CSV header.
struct CsvLayout {
  bool has_group = false;
  std::vector<std::string> label_names;
  bool has_confidence = false;
  std::size_t dim = 0;

  std::size_t width() const {
    return 2 + (has_group ? 1 : 0) + label_names.size() + (has_confidence ? 1 : 0) + dim;
  }
};

CsvLayout parse_header(std::string_view line, const std::string& where) {
  const auto fields = split_fields(strip_cr(line));
  auto fail = [&](const std::string& why) -> DataError {
    return DataError("malformed header in " + where + ": " + why);
  };
  if (fields.size() < 2 || fields[0] != "id" || fields[1] != "cohort") {
    throw fail("expected leading columns id,cohort");
  }
  CsvLayout layout;
  std::size_t pos = 2;
  if (pos < fields.size() && fields[pos] == "group_id") {
    layout.has_group = true;
    ++pos;
  }
  std::set<std::string> seen;
  while (pos < fields.size() && fields[pos].starts_with(kLabelPrefix)) {
    std::string name(fields[pos].substr(kLabelPrefix.size()));
    if (name.empty()) throw fail("empty label name");
    if (!seen.insert(name).second) throw fail("duplicate label column " + name);
    layout.label_names.push_back(std::move(name));
    ++pos;
  }
  if (pos < fields.size() && fields[pos] == "confidence") {
    layout.has_confidence = true;
    ++pos;
  }
  for (; pos < fields.size(); ++pos) {
    const std::string expected = "e" + std::to_string(layout.dim);
    if (fields[pos] != expected) {
      throw fail("unexpected column '" + std::string(fields[pos]) + "' (expected " + expected + ")");
    }
    ++layout.dim;
  }
  return layout;
}

// Parses one data row into `rec` (everything except the vector when the
// layout has no embedding columns).
EmbeddingRecord parse_row(const CsvLayout& layout, std::string_view line, std::size_t line_no,
                          const std::string& where) {
  const auto fields = split_fields(strip_cr(line));
  const std::string at = where + ":" + std::to_string(line_no);
  if (fields.size() != layout.width()) {
    throw DataError("ragged row at " + at + ": expected " + std::to_string(layout.width()) +
                    " cells, found " + std::to_string(fields.size()));
  }
  EmbeddingRecord rec;
  std::size_t pos = 0;
  rec.id = std::string(fields[pos++]);
  if (rec.id.empty()) throw DataError("empty id at " + at);
  rec.cohort = std::string(fields[pos++]);
  if (layout.has_group) {
    const auto cell = fields[pos++];
    if (!cell.empty()) rec.group_id = std::string(cell);
  }
  for (const auto& name : layout.label_names) {
    const auto cell = fields[pos++];
    if (!cell.empty()) rec.labels.emplace(name, std::string(cell));
  }
  if (layout.has_confidence) {
    const auto cell = fields[pos++];
    if (!cell.empty()) {
      const auto value = parse_number<double>(cell);
      if (!value) throw DataError("non-numeric confidence cell at " + at);
      if (!(*value >= 0.0 && *value <= 1.0)) {
        throw DataError("confidence out of range at " + at + ": " + std::string(cell));
      }
      rec.confidence = *value;
    }
  }
  rec.vector.reserve(layout.dim);
  for (std::size_t k = 0; k < layout.dim; ++k) {
    const auto value = parse_number<float>(fields[pos++]);
    if (!value) throw DataError("non-numeric embedding cell at " + at + " column e" + std::to_string(k));
    rec.vector.push_back(*value);
  }
  return rec;
}

std::vector<EmbeddingRecord> read_rows(std::istream& in, const std::string& where, CsvLayout& layout) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("malformed header in " + where + ": file is empty");
  layout = parse_header(line, where);
  std::vector<EmbeddingRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    records.push_back(parse_row(layout, line, line_no, where));
  }
  return records;
}

void write_rows(const Dataset& ds, std::ostream& out, bool with_vectors) {
  bool has_group = false;
  bool has_conf = false;
  for (const auto& r : ds.records()) {
    has_group |= r.group_id.has_value();
    has_conf |= r.confidence.has_value();
  }
  out << "id,cohort";
  if (has_group) out << ",group_id";
  for (const auto& [name, values] : ds.label_schema()) out << "," << kLabelPrefix << name;
  if (has_conf) out << ",confidence";
  if (with_vectors) {
    for (std::size_t k = 0; k < ds.dim(); ++k) out << ",e" << k;
  }
  out << "\n";
  for (const auto& r : ds.records()) {
    out << r.id << "," << r.cohort;
    if (has_group) out << "," << r.group_id.value_or("");
    for (const auto& [name, values] : ds.label_schema()) {
      out << ",";
      if (auto it = r.labels.find(name); it != r.labels.end()) out << it->second;
    }
    if (has_conf) {
      out << ",";
      if (r.confidence) out << format_number(*r.confidence);
    }
    if (with_vectors) {
      for (float v : r.vector) out << "," << format_number(v);
    }
    out << "\n";
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

Dataset::Dataset(std::vector<EmbeddingRecord> records, std::size_t dim, LabelSchema schema)
    : records_(std::move(records)), dim_(dim), schema_(std::move(schema)) {
  const bool infer = schema_.empty();
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.vector.size() != dim_) {
      throw DataError("record " + r.id + " has " + std::to_string(r.vector.size()) +
                      " embedding values, dataset dimension is " + std::to_string(dim_));
    }
    for (float v : r.vector) {
      if (!std::isfinite(v)) throw DataError("non-finite embedding value in record " + r.id);
    }
    if (r.confidence && !(*r.confidence >= 0.0 && *r.confidence <= 1.0)) {
      throw DataError("confidence out of range for record " + r.id);
    }
    if (!index_.emplace(r.id, i).second) throw DataError("duplicate id " + r.id);
    for (const auto& [name, value] : r.labels) {
      if (infer) {
        schema_[name].insert(value);
        continue;
      }
      auto it = schema_.find(name);
      if (it == schema_.end()) throw DataError("record " + r.id + " has undeclared label " + name);
      if (!it->second.contains(value)) {
        throw DataError("record " + r.id + " label " + name + " value '" + value + "' not in schema");
      }
    }
  }
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  if (auto it = index_.find(id); it != index_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

std::set<std::string> Dataset::cohorts() const {
  std::set<std::string> out;
  for (const auto& r : records_) out.insert(r.cohort);
  return out;
}

Eigen::MatrixXd Dataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records_.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < records_.size(); ++i) {
    for (std::size_t k = 0; k < dim_; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = records_[i].vector[k];
    }
  }
  return m;
}

Eigen::MatrixXd Dataset::matrix(const std::vector<std::size_t>& indices) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& v = records_.at(indices[i]).vector;
    for (std::size_t k = 0; k < dim_; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
    }
  }
  return m;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<EmbeddingRecord> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(records_.at(i));
  return Dataset(std::move(out), dim_, schema_);
}

Dataset load_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  CsvLayout layout;
  auto records = read_rows(in, path.string(), layout);
  return Dataset(std::move(records), layout.dim);
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_rows(ds, out, true);
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_binary(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    auto in = open_input(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  std::size_t dim = 0;
  std::size_t count = 0;
  std::string vector_file;
  try {
    dim = manifest.at("dim").get<std::size_t>();
    count = manifest.at("count").get<std::size_t>();
    vector_file = manifest.at("vector_file").get<std::string>();
    if (manifest.value("byte_order", "little") != "little") throw DataError("unsupported byte_order");
    if (manifest.value("dtype", "f32") != "f32") throw DataError("unsupported dtype");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  LabelSchema schema;
  if (manifest.contains("label_schema")) {
    for (const auto& [name, values] : manifest["label_schema"].items()) {
      for (const auto& v : values) schema[name].insert(v.get<std::string>());
    }
  }

  const auto vec_path = dir / vector_file;
  if (!std::filesystem::exists(vec_path)) throw DataError("missing vector file " + vec_path.string());
  const auto actual = std::filesystem::file_size(vec_path);
  const std::uintmax_t expected = static_cast<std::uintmax_t>(count) * dim * 4;
  if (actual != expected) {
    throw DataError("size mismatch for " + vec_path.string() + ": expected " + std::to_string(expected) +
                    " bytes, found " + std::to_string(actual));
  }

  std::vector<EmbeddingRecord> records;
  if (manifest.contains("metadata_file")) {
    const auto meta_path = dir / manifest["metadata_file"].get<std::string>();
    auto in = open_input(meta_path);
    CsvLayout layout;
    records = read_rows(in, meta_path.string(), layout);
    if (layout.dim != 0) throw DataError("malformed header in " + meta_path.string() + ": metadata must not carry e* columns");
  } else if (count != 0) {
    throw DataError("manifest " + manifest_path.string() + " has no metadata_file");
  }
  if (records.size() != count) {
    throw DataError("row-count disagreement: manifest declares " + std::to_string(count) +
                    " rows, metadata has " + std::to_string(records.size()));
  }

  auto in = open_input(vec_path);
  std::vector<unsigned char> bytes(dim * 4);
  for (auto& rec : records) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    rec.vector.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const unsigned char* b = bytes.data() + 4 * k;
      const std::uint32_t word = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                                 (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
      rec.vector[k] = std::bit_cast<float>(word);
    }
  }
  if (!in && count != 0) throw DataError("short read on " + vec_path.string());
  return Dataset(std::move(records), dim, std::move(schema));
}

void write_binary(const Dataset& ds, const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  const std::string meta_name = stem + ".meta.csv";
  const std::string vec_name = stem + ".f32";

  {
    auto out = open_output(dir / meta_name);
    write_rows(ds, out, false);
  }
  {
    auto out = open_output(dir / vec_name);
    std::vector<unsigned char> bytes(ds.dim() * 4);
    for (const auto& r : ds.records()) {
      for (std::size_t k = 0; k < ds.dim(); ++k) {
        const auto word = std::bit_cast<std::uint32_t>(r.vector[k]);
        for (int b = 0; b < 4; ++b) bytes[4 * k + b] = static_cast<unsigned char>(word >> (8 * b));
      }
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  }
  nlohmann::json manifest = {{"dim", ds.dim()},
                             {"count", ds.size()},
                             {"vector_file", vec_name},
                             {"metadata_file", meta_name},
                             {"byte_order", "little"},
                             {"dtype", "f32"}};
  nlohmann::json schema = nlohmann::json::object();
  for (const auto& [name, values] : ds.label_schema()) schema[name] = values;
  manifest["label_schema"] = schema;
  auto out = open_output(manifest_path);
  out << manifest.dump(2) << "\n";
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  }
  if (ds.empty()) throw std::invalid_argument("cannot split an empty dataset");
  const std::size_t n = ds.size();
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto target = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction + 1e-9));
  Rng rng(spec.seed);
  std::vector<char> in_train(n, 0);

  if (spec.mode == SplitMode::frame_level) {
    const auto order = rng.permutation(n);
    for (std::size_t k = 0; k < target; ++k) in_train[order[k]] = 1;
  } else {
    std::vector<std::string> groups;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& g = ds[i].group_id;
      if (!g) throw DataError("group_level split requested but record " + ds[i].id + " has no group_id");
      auto [it, inserted] = members.try_emplace(*g);
      if (inserted) groups.push_back(*g);
      it->second.push_back(i);
    }
    rng.shuffle(groups);
    std::size_t taken = 0;
    for (const auto& g : groups) {
      if (taken >= target) break;
      for (auto i : members[g]) in_train[i] = 1;
      taken += members[g].size();
    }
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train_idx : test_idx).push_back(i);
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

Dataset filter_by_cohort(const Dataset& ds, const std::set<std::string>& cohorts) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (cohorts.contains(ds[i].cohort)) keep.push_back(i);
  }
  return ds.subset(keep);
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
  if (!a.empty() && !b.empty() && a.dim() != b.dim()) {
    throw std::invalid_argument("concatenate: dimension mismatch");
  }
  std::vector<EmbeddingRecord> records = a.records();
  records.insert(records.end(), b.records().begin(), b.records().end());
  LabelSchema schema = a.label_schema();
  for (const auto& [name, values] : b.label_schema()) schema[name].insert(values.begin(), values.end());
  return Dataset(std::move(records), a.empty() ? b.dim() : a.dim(), std::move(schema));
}

}  // namespace shiftaudit
