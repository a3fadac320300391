#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qcnn {

enum class Split { Train, Test };
enum class Source { MNIST, FashionMNIST, Iris };

std::string_view source_name(Source s);

// Row-major dense feature storage.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

struct Dataset {
    FeatureMatrix samples;
    std::vector<int> labels;
    Split split = Split::Train;
    Source source = Source::MNIST;

    std::size_t size() const { return samples.rows; }
};

// Reads an IDX image/label file pair (big-endian, magic 0x00000803 images /
// 0x00000801 labels). Pixels are scaled to [0, 1]. Malformed input raises
// DataError naming the offending byte offset.
Dataset parse_idx(const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path, Split split, Source source);

// Reads a CSV of 4 numeric feature columns plus a class column (string or
// integer). An initial header line is skipped. String classes are assigned
// indices in order of first appearance.
Dataset parse_iris_csv(const std::filesystem::path& path);

// Keeps only the given classes and relabels them to 0..k-1 in list order.
Dataset filter_classes(const Dataset& ds, std::span<const int> classes);

// Deterministic per-class shuffle and split with `train_count` total training
// samples, apportioned to classes by largest remainder.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, int train_count,
                                             std::uint64_t seed);

// First `per_class` samples of every class, in file order.
Dataset take_per_class(const Dataset& ds, int per_class);

// 28x28 -> 16x16 bilinear downsample (half-pixel centers), flattened
// row-major. Constant images stay constant.
std::vector<double> resize_16(std::span<const double> image784);

// Per-feature min/max observed on the training split.
struct FeatureRange {
    std::vector<double> lo;
    std::vector<double> hi;

    // Degenerate (zero-width) features produce one warning line on `warn`.
    static FeatureRange fit(const FeatureMatrix& features, std::ostream* warn = nullptr);
};

// Min-max map of each feature onto [0, pi]; out-of-range test values are
// clamped. Zero-width features map to pi/2.
std::vector<double> scale_for_angle(std::span<const double> features, const FeatureRange& range);

// Vector divided by its L2 norm. Zero vectors cannot be amplitude-encoded
// and raise EncodingError.
std::vector<double> normalize_l2(std::span<const double> features);

// Standard basis vector of length k.
std::vector<double> one_hot(int label, int k);

enum class ReducerKind { Resize16, PCA8, Autoencoder8, None };

std::string_view reducer_kind_name(ReducerKind k);

struct AutoencoderOptions {
    int hidden = 64;
    int bottleneck = 8;
    int max_epochs = 40;
    int batch_size = 32;
    double learning_rate = 0.3;
    double validation_fraction = 0.1;
    int patience = 5;      // evaluations without improvement before stopping
    double min_delta = 1e-5;
    std::uint64_t seed = 1;
};

// Classical dimensionality reduction fitted on the training split only.
// PCA8 projects mean-centered samples onto the top 8 principal components;
// Autoencoder8 trains a dense 784-64-8-64-784 reconstruction network and
// keeps the encoder half. feature_range() is learned on the reduced training
// features and drives angle scaling.
class Reducer {
  public:
    static Reducer fit(const Dataset& train, ReducerKind kind,
                       const AutoencoderOptions& options = {});

    ReducerKind kind() const { return kind_; }
    int output_dim() const;
    std::vector<double> apply(std::span<const double> sample) const;
    const FeatureRange& feature_range() const { return range_; }

    // PCA internals, exposed for verification.
    const Eigen::MatrixXd& pca_components() const { return components_; }
    const Eigen::VectorXd& pca_mean() const { return mean_; }

    // Mean squared reconstruction error over a dataset (PCA and autoencoder).
    double reconstruction_mse(const Dataset& ds) const;

  private:
    ReducerKind kind_ = ReducerKind::None;
    // PCA
    Eigen::MatrixXd components_; // 8 x D, orthonormal rows
    Eigen::VectorXd mean_;
    // Autoencoder
    struct AeLayer {
        Eigen::MatrixXd w;
        Eigen::VectorXd b;
        bool sigmoid = true;
    };
    std::vector<AeLayer> encoder_;
    std::vector<AeLayer> decoder_;
    FeatureRange range_;

    friend Reducer fit_autoencoder(const Dataset& train, const AutoencoderOptions& options);
};

// Encoder-ready feature rows plus labels, as written by `prepare`.
struct Preprocessed {
    FeatureMatrix features;
    std::vector<int> labels;
};

// Binary cache: little-endian float64 rows next to a JSON sidecar carrying
// shapes, labels and provenance. `base` is the path without extension;
// writes base.bin and base.json.
void save_cache(const std::filesystem::path& base, const Preprocessed& data,
                const std::string& sidecar_json);
Preprocessed load_cache(const std::filesystem::path& base, std::string* sidecar_json = nullptr);

} // namespace qcnn
