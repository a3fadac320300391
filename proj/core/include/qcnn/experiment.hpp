#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "qcnn/circuit.hpp"
#include "qcnn/datapipe.hpp"
#include "qcnn/trainer.hpp"

namespace qcnn {

struct DatasetConfig {
    Source source = Source::MNIST;
    std::filesystem::path dir;       // directory holding the standard IDX files
    std::filesystem::path csv;       // iris feature CSV
    std::vector<int> classes = {0, 1};
    int train_subset_per_class = 0;  // 0 = use every training sample
    std::uint64_t split_seed = 7;    // iris train/test shuffle
    int iris_train_count = 113;
};

// One declarative experiment document: dataset, reducer, network and
// training sections plus the output directory.
struct ExperimentConfig {
    DatasetConfig dataset;
    ReducerKind reducer = ReducerKind::Resize16;
    AutoencoderOptions autoencoder;
    NetworkConfig network;
    TrainConfig train;
    std::filesystem::path out_dir = "runs/out";

    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    // Cross-field validation; throws ConfigError naming the field path.
    void validate() const;

    // Stable fingerprint of the preprocessing-relevant fields, used for
    // cache invalidation.
    std::uint64_t prepare_hash() const;

    std::filesystem::path cache_base(Split split) const;
};

// Loads the raw dataset, filters/subsets classes, fits the reducer on the
// training split and writes encoder-ready caches. Returns false when the
// cache was already current (hash match).
bool prepare_data(const ExperimentConfig& config);

// Loads the caches written by prepare_data; throws DataError when missing
// or stale.
std::pair<Preprocessed, Preprocessed> load_prepared(const ExperimentConfig& config);

// Parameter file IO ({"layout_hash": ..., "values": [...]}).
void save_params(const std::filesystem::path& path, const ParameterVector& params);
std::vector<double> load_params(const std::filesystem::path& path, const ParamLayout& expected);

// Metrics emission.
void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics);
void write_trajectory_csv(const std::filesystem::path& path, const RunMetrics& metrics);
void write_summary_json(const std::filesystem::path& path, const ExperimentConfig& config,
                        const AggregateMetrics& agg);

} // namespace qcnn
