#include "qcnn/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qcnn/errors.hpp"
#include "qcnn/rng.hpp"

namespace qcnn {

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path,
                        std::size_t offset) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in)
        throw DataError(path.string() + ": file truncated, expected 4 bytes at offset " +
                        std::to_string(offset));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

std::vector<int> class_list(const Dataset& ds) {
    std::vector<int> classes;
    for (int l : ds.labels)
        if (std::find(classes.begin(), classes.end(), l) == classes.end())
            classes.push_back(l);
    std::sort(classes.begin(), classes.end());
    return classes;
}

Dataset select_rows(const Dataset& ds, std::span<const std::size_t> rows,
                    const std::vector<int>* relabel = nullptr) {
    Dataset out;
    out.split = ds.split;
    out.source = ds.source;
    out.samples = FeatureMatrix(rows.size(), ds.samples.cols);
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = ds.samples.row(rows[i]);
        std::copy(src.begin(), src.end(), out.samples.row(i).begin());
        const int label = ds.labels[rows[i]];
        out.labels.push_back(relabel ? (*relabel)[label] : label);
    }
    return out;
}

} // namespace

std::string_view source_name(Source s) {
    switch (s) {
    case Source::MNIST: return "mnist";
    case Source::FashionMNIST: return "fashion_mnist";
    case Source::Iris: return "iris";
    }
    return "?";
}

std::string_view reducer_kind_name(ReducerKind k) {
    switch (k) {
    case ReducerKind::Resize16: return "resize";
    case ReducerKind::PCA8: return "pca";
    case ReducerKind::Autoencoder8: return "autoencoder";
    case ReducerKind::None: return "none";
    }
    return "?";
}

Dataset parse_idx(const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path, Split split, Source source) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img)
        throw DataError("cannot open " + images_path.string());
    const std::uint32_t img_magic = read_be32(img, images_path, 0);
    if (img_magic != 0x00000803u) {
        std::ostringstream os;
        os << images_path.string() << ": bad image magic 0x" << std::hex << img_magic
           << " at byte 0 (expected 0x803)";
        throw DataError(os.str());
    }
    const std::uint32_t count = read_be32(img, images_path, 4);
    const std::uint32_t rows = read_be32(img, images_path, 8);
    const std::uint32_t cols = read_be32(img, images_path, 12);
    if (rows != 28 || cols != 28)
        throw DataError(images_path.string() + ": expected 28x28 images, got " +
                        std::to_string(rows) + "x" + std::to_string(cols) + " at byte 8");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab)
        throw DataError("cannot open " + labels_path.string());
    const std::uint32_t lab_magic = read_be32(lab, labels_path, 0);
    if (lab_magic != 0x00000801u) {
        std::ostringstream os;
        os << labels_path.string() << ": bad label magic 0x" << std::hex << lab_magic
           << " at byte 0 (expected 0x801)";
        throw DataError(os.str());
    }
    const std::uint32_t lab_count = read_be32(lab, labels_path, 4);
    if (lab_count != count)
        throw DataError(labels_path.string() + ": label count " + std::to_string(lab_count) +
                        " does not match image count " + std::to_string(count));

    const std::size_t pixels = std::size_t(rows) * cols;
    Dataset ds;
    ds.split = split;
    ds.source = source;
    ds.samples = FeatureMatrix(count, pixels);
    ds.labels.resize(count);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        if (!img)
            throw DataError(images_path.string() + ": file truncated at byte " +
                            std::to_string(16 + std::size_t(i) * pixels) + " (image " +
                            std::to_string(i) + " of " + std::to_string(count) + ")");
        auto row = ds.samples.row(i);
        for (std::size_t p = 0; p < pixels; ++p)
            row[p] = buf[p] / 255.0;
    }
    std::vector<unsigned char> lbuf(count);
    lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(count));
    if (!lab)
        throw DataError(labels_path.string() + ": file truncated at byte 8");
    for (std::uint32_t i = 0; i < count; ++i)
        ds.labels[i] = lbuf[i];
    return ds;
}

Dataset parse_iris_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());

    Dataset ds;
    ds.split = Split::Train;
    ds.source = Source::Iris;
    std::vector<double> values;
    std::vector<std::string> class_names;

    std::string line;
    int line_no = 0;
    bool saw_data = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.back() == '\r')
            line.erase(line.find_last_not_of("\r\n") + 1);
        if (line.empty())
            continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ','))
            fields.push_back(field);

        auto parse_double = [](const std::string& s, double& out) {
            try {
                std::size_t pos = 0;
                out = std::stod(s, &pos);
                return pos == s.size();
            } catch (...) {
                return false;
            }
        };

        double probe = 0.0;
        if (!saw_data && line_no == 1 && (fields.empty() || !parse_double(fields[0], probe)))
            continue; // header line

        if (fields.size() != 5)
            throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected 5");
        double f[4];
        for (int c = 0; c < 4; ++c)
            if (!parse_double(fields[c], f[c]))
                throw DataError(path.string() + ": row " + std::to_string(line_no) +
                                " column " + std::to_string(c + 1) + " is not numeric: '" +
                                fields[c] + "'");
        int label = 0;
        try {
            std::size_t pos = 0;
            label = std::stoi(fields[4], &pos);
            if (pos != fields[4].size())
                throw std::invalid_argument("");
        } catch (...) {
            auto it = std::find(class_names.begin(), class_names.end(), fields[4]);
            if (it == class_names.end()) {
                class_names.push_back(fields[4]);
                it = std::prev(class_names.end());
            }
            label = static_cast<int>(it - class_names.begin());
        }
        values.insert(values.end(), f, f + 4);
        ds.labels.push_back(label);
        saw_data = true;
    }
    if (!saw_data)
        throw DataError(path.string() + ": no data rows");

    ds.samples.rows = ds.labels.size();
    ds.samples.cols = 4;
    ds.samples.data = std::move(values);
    return ds;
}

Dataset filter_classes(const Dataset& ds, std::span<const int> classes) {
    if (classes.empty())
        throw UsageError("filter_classes needs at least one class");
    std::vector<int> seen;
    int max_label = 0;
    for (int c : classes) {
        if (std::find(seen.begin(), seen.end(), c) != seen.end())
            throw UsageError("duplicate class " + std::to_string(c));
        if (std::find(ds.labels.begin(), ds.labels.end(), c) == ds.labels.end())
            throw UsageError("class " + std::to_string(c) + " not present in dataset");
        seen.push_back(c);
        max_label = std::max(max_label, c);
    }
    std::vector<int> relabel(max_label + 1, -1);
    for (std::size_t k = 0; k < classes.size(); ++k)
        relabel[classes[k]] = static_cast<int>(k);

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] <= max_label && relabel[ds.labels[i]] >= 0)
            keep.push_back(i);
    return select_rows(ds, keep, &relabel);
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, int train_count,
                                             std::uint64_t seed) {
    if (train_count <= 0 || static_cast<std::size_t>(train_count) >= ds.size())
        throw UsageError("train_count must be in (0, dataset size)");

    const std::vector<int> classes = class_list(ds);
    std::vector<std::vector<std::size_t>> per_class(classes.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto it = std::find(classes.begin(), classes.end(), ds.labels[i]);
        per_class[it - classes.begin()].push_back(i);
    }

    Rng rng(seed);
    for (auto& idx : per_class)
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.index(i)]);

    // Largest-remainder apportionment of the train quota.
    std::vector<int> take(classes.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const double quota =
            double(train_count) * double(per_class[c].size()) / double(ds.size());
        take[c] = static_cast<int>(quota);
        assigned += take[c];
        remainders.push_back({quota - take[c], c});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < train_count - assigned; ++i)
        take[remainders[i % remainders.size()].second] += 1;

    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (std::size_t i = 0; i < per_class[c].size(); ++i)
            (i < static_cast<std::size_t>(take[c]) ? train_rows : test_rows)
                .push_back(per_class[c][i]);
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());

    Dataset train = select_rows(ds, train_rows);
    Dataset test = select_rows(ds, test_rows);
    train.split = Split::Train;
    test.split = Split::Test;
    return {std::move(train), std::move(test)};
}

Dataset take_per_class(const Dataset& ds, int per_class) {
    if (per_class <= 0)
        throw UsageError("per_class must be positive");
    const std::vector<int> classes = class_list(ds);
    std::vector<int> counts(classes.size(), 0);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto it = std::find(classes.begin(), classes.end(), ds.labels[i]);
        int& n = counts[it - classes.begin()];
        if (n < per_class) {
            keep.push_back(i);
            ++n;
        }
    }
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (counts[c] < per_class)
            throw UsageError("class " + std::to_string(classes[c]) + " has only " +
                             std::to_string(counts[c]) + " samples, need " +
                             std::to_string(per_class));
    return select_rows(ds, keep);
}

std::vector<double> resize_16(std::span<const double> image784) {
    if (image784.size() != 784)
        throw UsageError("resize_16 expects a flattened 28x28 image (784 values), got " +
                         std::to_string(image784.size()));
    constexpr int kSrc = 28;
    constexpr int kDst = 16;
    constexpr double kScale = double(kSrc) / kDst;

    std::vector<double> out(kDst * kDst);
    for (int r = 0; r < kDst; ++r) {
        const double sy = std::clamp((r + 0.5) * kScale - 0.5, 0.0, double(kSrc - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, kSrc - 1);
        const double wy = sy - y0;
        for (int c = 0; c < kDst; ++c) {
            const double sx = std::clamp((c + 0.5) * kScale - 0.5, 0.0, double(kSrc - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, kSrc - 1);
            const double wx = sx - x0;
            const double top = image784[y0 * kSrc + x0] * (1.0 - wx) + image784[y0 * kSrc + x1] * wx;
            const double bot = image784[y1 * kSrc + x0] * (1.0 - wx) + image784[y1 * kSrc + x1] * wx;
            out[r * kDst + c] = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

FeatureRange FeatureRange::fit(const FeatureMatrix& features, std::ostream* warn) {
    if (features.rows == 0)
        throw UsageError("cannot fit feature range on an empty matrix");
    FeatureRange r;
    r.lo.assign(features.cols, std::numeric_limits<double>::infinity());
    r.hi.assign(features.cols, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto row = features.row(i);
        for (std::size_t c = 0; c < features.cols; ++c) {
            r.lo[c] = std::min(r.lo[c], row[c]);
            r.hi[c] = std::max(r.hi[c], row[c]);
        }
    }
    if (warn) {
        for (std::size_t c = 0; c < features.cols; ++c)
            if (r.lo[c] == r.hi[c])
                *warn << "warning: feature " << c
                      << " is constant on the training split; angle fixed to pi/2\n";
    }
    return r;
}

std::vector<double> scale_for_angle(std::span<const double> features, const FeatureRange& range) {
    if (features.size() != range.lo.size())
        throw UsageError("feature length " + std::to_string(features.size()) +
                         " does not match fitted range length " + std::to_string(range.lo.size()));
    std::vector<double> out(features.size());
    for (std::size_t c = 0; c < features.size(); ++c) {
        const double width = range.hi[c] - range.lo[c];
        if (width == 0.0) {
            out[c] = std::numbers::pi / 2.0;
            continue;
        }
        const double t = std::clamp((features[c] - range.lo[c]) / width, 0.0, 1.0);
        out[c] = t * std::numbers::pi;
    }
    return out;
}

std::vector<double> normalize_l2(std::span<const double> features) {
    double sq = 0.0;
    for (double v : features)
        sq += v * v;
    if (sq == 0.0)
        throw EncodingError("cannot normalize an all-zero feature vector");
    const double inv = 1.0 / std::sqrt(sq);
    std::vector<double> out(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        out[i] = features[i] * inv;
    return out;
}

std::vector<double> one_hot(int label, int k) {
    if (label < 0 || label >= k)
        throw UsageError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(k) + " classes");
    std::vector<double> v(k, 0.0);
    v[label] = 1.0;
    return v;
}

void save_cache(const std::filesystem::path& base, const Preprocessed& data,
                const std::string& sidecar_json) {
    std::filesystem::path bin = base;
    bin += ".bin";
    std::ofstream out(bin, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + bin.string());
    // Rows are stored as raw little-endian float64; this loader only targets
    // little-endian hosts.
    out.write(reinterpret_cast<const char*>(data.features.data.data()),
              static_cast<std::streamsize>(data.features.data.size() * sizeof(double)));
    if (!out)
        throw DataError("failed writing " + bin.string());

    nlohmann::json side;
    side["rows"] = data.features.rows;
    side["cols"] = data.features.cols;
    side["labels"] = data.labels;
    side["meta"] = nlohmann::json::parse(sidecar_json.empty() ? "{}" : sidecar_json);
    std::filesystem::path js = base;
    js += ".json";
    std::ofstream jout(js);
    jout << side.dump(2) << "\n";
    if (!jout)
        throw DataError("failed writing " + js.string());
}

Preprocessed load_cache(const std::filesystem::path& base, std::string* sidecar_json) {
    std::filesystem::path js = base;
    js += ".json";
    std::ifstream jin(js);
    if (!jin)
        throw DataError("cannot open cache sidecar " + js.string());
    nlohmann::json side;
    try {
        jin >> side;
    } catch (const std::exception& e) {
        throw DataError("malformed cache sidecar " + js.string() + ": " + e.what());
    }

    Preprocessed out;
    out.features = FeatureMatrix(side.at("rows").get<std::size_t>(),
                                 side.at("cols").get<std::size_t>());
    out.labels = side.at("labels").get<std::vector<int>>();
    if (out.labels.size() != out.features.rows)
        throw DataError(js.string() + ": label count does not match row count");
    if (sidecar_json)
        *sidecar_json = side.value("meta", nlohmann::json::object()).dump();

    std::filesystem::path bin = base;
    bin += ".bin";
    std::ifstream in(bin, std::ios::binary);
    if (!in)
        throw DataError("cannot open cache " + bin.string());
    in.read(reinterpret_cast<char*>(out.features.data.data()),
            static_cast<std::streamsize>(out.features.data.size() * sizeof(double)));
    if (!in || in.gcount() !=
                   static_cast<std::streamsize>(out.features.data.size() * sizeof(double)))
        throw DataError(bin.string() + ": truncated feature cache");
    return out;
}

} // namespace qcnn
