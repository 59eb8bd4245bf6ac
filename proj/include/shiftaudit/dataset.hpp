#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace shiftaudit {

/// One embedding vector per frame. Vectors are stored at 32-bit precision,
/// which is also the on-disk precision; arithmetic happens in double.
struct EmbeddingRecord {
  std::string id;
  std::string cohort;
  std::optional<std::string> group_id;
  std::map<std::string, std::string> labels;  // label name -> categorical value
  std::optional<double> confidence;           // absent is not the same as 0
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

using LabelSchema = std::map<std::string, std::set<std::string>>;

/// Ordered, immutable-after-construction collection of records sharing one
/// dimension. Record order is load order; seeded operations depend on it.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every record against `dim` and `schema`. When `schema` is
  /// empty it is inferred from the labels present in `records`.
  Dataset(std::vector<EmbeddingRecord> records, std::size_t dim, LabelSchema schema = {});

  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const LabelSchema& label_schema() const noexcept { return schema_; }

  /// Position of `id`, or nullopt.
  std::optional<std::size_t> find(const std::string& id) const;

  std::vector<std::string> ids() const;
  std::set<std::string> cohorts() const;

  /// n x D matrix of all vectors (double precision).
  Eigen::MatrixXd matrix() const;

  /// Rows of `indices` only, in the given order.
  Eigen::MatrixXd matrix(const std::vector<std::size_t>& indices) const;

  /// Sub-dataset of `indices` (in the given order) sharing this schema.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const Dataset& other) const {
    return dim_ == other.dim_ && schema_ == other.schema_ && records_ == other.records_;
  }

 private:
  std::vector<EmbeddingRecord> records_;
  std::size_t dim_ = 0;
  LabelSchema schema_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class SplitMode { frame_level, group_level };

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::frame_level;
};

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Loads the CSV layout
/// `id,cohort[,group_id][,label.<name>]*[,confidence],e0,...,e{D-1}`.
/// Empty cells mark absent optional fields. Throws DataError on malformed
/// header, ragged rows, non-numeric embedding cells, duplicate ids and
/// confidences outside [0,1].
Dataset load_csv(const std::filesystem::path& path);

/// Writes `ds` in the layout read by load_csv. Floats are printed in their
/// shortest round-trip form, so load_csv(write_csv(ds)) == ds.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Loads a JSON manifest {dim, count, vector_file, metadata_file,
/// byte_order:"little", dtype:"f32"[, label_schema]} with a metadata CSV (the
/// CSV layout without e* columns) and a raw row-major little-endian f32 file.
Dataset load_binary(const std::filesystem::path& manifest_path);

/// Writes manifest, `<stem>.meta.csv` and `<stem>.f32` next to `manifest_path`.
void write_binary(const Dataset& ds, const std::filesystem::path& manifest_path);

/// Deterministic partition. frame_level shuffles records and sends the first
/// floor(n * train_fraction) to train; group_level shuffles groups and adds
/// whole groups to train until it holds at least that many records. Both
/// outputs keep load order.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

/// Records whose cohort is in `cohorts`, in load order.
Dataset filter_by_cohort(const Dataset& ds, const std::set<std::string>& cohorts);

/// Concatenation of datasets with equal dimension; ids must stay unique.
Dataset concatenate(const Dataset& a, const Dataset& b);

}  // namespace shiftaudit
