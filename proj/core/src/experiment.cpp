#include "qcnn/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qcnn/errors.hpp"

namespace qcnn {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        fail(path + "." + key, "has the wrong type");
    }
}

Source parse_source(const std::string& s, const std::string& path) {
    if (s == "mnist")
        return Source::MNIST;
    if (s == "fashion_mnist" || s == "fashion")
        return Source::FashionMNIST;
    if (s == "iris")
        return Source::Iris;
    fail(path, "unknown source '" + s + "' (mnist | fashion_mnist | iris)");
}

ReducerKind parse_reducer(const std::string& s, const std::string& path) {
    if (s == "resize")
        return ReducerKind::Resize16;
    if (s == "pca")
        return ReducerKind::PCA8;
    if (s == "autoencoder")
        return ReducerKind::Autoencoder8;
    if (s == "none")
        return ReducerKind::None;
    fail(path, "unknown reducer '" + s + "' (resize | pca | autoencoder | none)");
}

Encoding parse_encoding(const std::string& s, const std::string& path) {
    if (s == "amplitude")
        return Encoding::Amplitude;
    if (s == "angle")
        return Encoding::Angle;
    fail(path, "unknown encoding '" + s + "' (amplitude | angle)");
}

LrSchedule parse_schedule(const std::string& s, const std::string& path) {
    if (s == "halve_at_50_100")
        return LrSchedule::HalveAt50And100;
    if (s == "drop_to_0.01_at_50")
        return LrSchedule::DropTo0p01At50;
    if (s == "constant")
        return LrSchedule::Constant;
    fail(path, "unknown lr_schedule '" + s + "'");
}

GradMethod parse_grad(const std::string& s, const std::string& path) {
    if (s == "parameter_shift")
        return GradMethod::ParameterShift;
    if (s == "finite_difference")
        return GradMethod::FiniteDifference;
    if (s == "adjoint")
        return GradMethod::Adjoint;
    fail(path, "unknown grad_method '" + s + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig c;

    const json ds = doc.value("dataset", json::object());
    c.dataset.source = parse_source(get_or<std::string>(ds, "dataset", "source", "mnist"),
                                    "dataset.source");
    c.dataset.dir = get_or<std::string>(ds, "dataset", "dir", "");
    c.dataset.csv = get_or<std::string>(ds, "dataset", "csv", "");
    c.dataset.classes = get_or<std::vector<int>>(ds, "dataset", "classes", {0, 1});
    c.dataset.train_subset_per_class = get_or<int>(ds, "dataset", "train_subset_per_class", 0);
    c.dataset.split_seed = get_or<std::uint64_t>(ds, "dataset", "split_seed", 7);
    c.dataset.iris_train_count = get_or<int>(ds, "dataset", "iris_train_count", 113);

    const json rd = doc.value("reducer", json::object());
    c.reducer = parse_reducer(get_or<std::string>(rd, "reducer", "kind", "resize"),
                              "reducer.kind");
    if (rd.contains("autoencoder")) {
        const json ae = rd.at("autoencoder");
        c.autoencoder.hidden = get_or<int>(ae, "reducer.autoencoder", "hidden", 64);
        c.autoencoder.max_epochs = get_or<int>(ae, "reducer.autoencoder", "max_epochs", 40);
        c.autoencoder.batch_size = get_or<int>(ae, "reducer.autoencoder", "batch_size", 32);
        c.autoencoder.learning_rate =
            get_or<double>(ae, "reducer.autoencoder", "learning_rate", 0.3);
        c.autoencoder.patience = get_or<int>(ae, "reducer.autoencoder", "patience", 5);
        c.autoencoder.seed = get_or<std::uint64_t>(ae, "reducer.autoencoder", "seed", 1);
    }

    const json net = doc.value("network", json::object());
    c.network.encoding = parse_encoding(get_or<std::string>(net, "network", "encoding",
                                                            "amplitude"),
                                        "network.encoding");
    const int ansatz = get_or<int>(net, "network", "ansatz", 1);
    if (ansatz != 1 && ansatz != 2)
        fail("network.ansatz", "must be 1 or 2");
    c.network.ansatz = ansatz == 1 ? AnsatzKind::A1 : AnsatzKind::A2;
    c.network.conv_repeats_per_stage = get_or<int>(net, "network", "conv_repeats_per_stage", 0);
    c.network.interaction_layers_enabled = get_or<bool>(net, "network", "interaction_layers", true);

    // Derived fields.
    c.network.iris_variant = c.dataset.source == Source::Iris;
    c.network.data_qubits = c.network.iris_variant ? 4 : 8;
    c.network.num_classes = static_cast<int>(c.dataset.classes.size());
    if (c.network.conv_repeats_per_stage == 0)
        c.network.conv_repeats_per_stage =
            (!c.network.iris_variant && c.network.num_classes > 2) ? 2 : 1;

    const json tr = doc.value("train", json::object());
    c.train.iterations = get_or<int>(tr, "train", "iterations", 1000);
    c.train.batch_size = get_or<int>(tr, "train", "batch_size", 50);
    c.train.lr_initial = get_or<double>(tr, "train", "lr_initial", 0.05);
    c.train.lr_schedule = parse_schedule(
        get_or<std::string>(tr, "train", "lr_schedule", "halve_at_50_100"), "train.lr_schedule");
    c.train.momentum = get_or<double>(tr, "train", "momentum", 0.9);
    c.train.eval_every = get_or<int>(tr, "train", "eval_every", 10);
    c.train.seeds = get_or<std::vector<std::uint64_t>>(tr, "train", "seeds",
                                                       {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    c.train.grad_method = parse_grad(
        get_or<std::string>(tr, "train", "grad_method", "parameter_shift"), "train.grad_method");
    c.train.finite_diff_step = get_or<double>(tr, "train", "finite_diff_step", 1e-4);
    c.train.record_trajectory = get_or<bool>(tr, "train", "record_trajectory", false);
    c.train.threads = get_or<int>(tr, "train", "threads", 0);

    c.out_dir = get_or<std::string>(doc, "", "out_dir", "runs/out");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
    ExperimentConfig c = from_json(doc);
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    json doc;
    doc["dataset"] = {{"source", std::string(source_name(dataset.source))},
                      {"dir", dataset.dir.string()},
                      {"csv", dataset.csv.string()},
                      {"classes", dataset.classes},
                      {"train_subset_per_class", dataset.train_subset_per_class},
                      {"split_seed", dataset.split_seed},
                      {"iris_train_count", dataset.iris_train_count}};
    doc["reducer"] = {{"kind", std::string(reducer_kind_name(reducer))}};
    doc["network"] = {{"encoding", std::string(encoding_name(network.encoding))},
                      {"ansatz", network.ansatz == AnsatzKind::A1 ? 1 : 2},
                      {"data_qubits", network.data_qubits},
                      {"num_classes", network.num_classes},
                      {"conv_repeats_per_stage", network.conv_repeats_per_stage},
                      {"interaction_layers", network.interaction_layers_enabled},
                      {"iris_variant", network.iris_variant}};
    doc["train"] = {{"iterations", train.iterations},
                    {"batch_size", train.batch_size},
                    {"lr_initial", train.lr_initial},
                    {"lr_schedule", std::string(lr_schedule_name(train.lr_schedule))},
                    {"momentum", train.momentum},
                    {"eval_every", train.eval_every},
                    {"seeds", train.seeds},
                    {"grad_method", std::string(grad_method_name(train.grad_method))},
                    {"finite_diff_step", train.finite_diff_step},
                    {"record_trajectory", train.record_trajectory},
                    {"threads", train.threads}};
    doc["out_dir"] = out_dir.string();
    return doc;
}

void ExperimentConfig::validate() const {
    if (dataset.classes.size() < 2)
        fail("dataset.classes", "need at least two classes");
    for (std::size_t i = 0; i < dataset.classes.size(); ++i)
        for (std::size_t j = i + 1; j < dataset.classes.size(); ++j)
            if (dataset.classes[i] == dataset.classes[j])
                fail("dataset.classes", "duplicate class " + std::to_string(dataset.classes[i]));

    const bool iris = dataset.source == Source::Iris;
    if (iris) {
        if (dataset.csv.empty())
            fail("dataset.csv", "iris requires a feature CSV path");
        if (network.encoding != Encoding::Angle)
            fail("network.encoding", "the iris variant uses angle encoding");
        if (reducer != ReducerKind::None)
            fail("reducer.kind", "iris features are encoded directly; use 'none'");
    } else {
        if (dataset.dir.empty())
            fail("dataset.dir", "image datasets require the IDX directory");
        if (network.encoding == Encoding::Amplitude && reducer != ReducerKind::Resize16)
            fail("reducer.kind", "amplitude encoding requires the resize reducer");
        if (network.encoding == Encoding::Angle && reducer != ReducerKind::PCA8 &&
            reducer != ReducerKind::Autoencoder8)
            fail("reducer.kind", "angle encoding requires the pca or autoencoder reducer");
        if (dataset.train_subset_per_class < 0)
            fail("dataset.train_subset_per_class", "must be nonnegative");
    }
    network.validate();
    train.validate();
}

std::uint64_t ExperimentConfig::prepare_hash() const {
    std::ostringstream os;
    os << source_name(dataset.source) << '|' << dataset.dir.string() << '|'
       << dataset.csv.string() << '|';
    for (int c : dataset.classes)
        os << c << ',';
    os << '|' << dataset.train_subset_per_class << '|' << dataset.split_seed << '|'
       << dataset.iris_train_count << '|' << reducer_kind_name(reducer) << '|'
       << encoding_name(network.encoding);
    if (reducer == ReducerKind::Autoencoder8)
        os << '|' << autoencoder.hidden << ',' << autoencoder.max_epochs << ','
           << autoencoder.batch_size << ',' << format_double(autoencoder.learning_rate) << ','
           << autoencoder.patience << ',' << autoencoder.seed;
    return fnv1a(os.str());
}

std::filesystem::path ExperimentConfig::cache_base(Split split) const {
    return out_dir / "cache" / (split == Split::Train ? "train" : "test");
}

namespace {

// Applies the configured reducer + encoding-specific transform to a dataset.
Preprocessed transform(const ExperimentConfig& config, const Dataset& ds, const Reducer* reducer,
                       const FeatureRange* iris_range) {
    Preprocessed out;
    out.labels = ds.labels;

    std::size_t out_dim = 0;
    if (config.network.encoding == Encoding::Amplitude)
        out_dim = 256;
    else
        out_dim = config.network.iris_variant ? 4 : 8;
    out.features = FeatureMatrix(ds.size(), out_dim);

    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> f;
        if (config.network.iris_variant) {
            f = scale_for_angle(ds.samples.row(i), *iris_range);
        } else if (config.network.encoding == Encoding::Amplitude) {
            f = normalize_l2(reducer->apply(ds.samples.row(i)));
        } else {
            f = scale_for_angle(reducer->apply(ds.samples.row(i)), reducer->feature_range());
        }
        std::copy(f.begin(), f.end(), out.features.row(i).begin());
    }
    return out;
}

json cache_meta(const ExperimentConfig& config, const Dataset& ds) {
    json meta;
    meta["prepare_hash"] = config.prepare_hash();
    meta["source"] = std::string(source_name(ds.source));
    meta["split"] = ds.split == Split::Train ? "train" : "test";
    meta["config"] = config.to_json();
    return meta;
}

} // namespace

bool prepare_data(const ExperimentConfig& config) {
    config.validate();

    // Cache hit when both sidecars carry the current preprocessing hash.
    auto cache_current = [&](Split split) {
        try {
            std::string meta_str;
            load_cache(config.cache_base(split), &meta_str);
            const json meta = json::parse(meta_str);
            return meta.value("prepare_hash", std::uint64_t{0}) == config.prepare_hash();
        } catch (const std::exception&) {
            return false;
        }
    };
    if (cache_current(Split::Train) && cache_current(Split::Test))
        return false;

    Dataset train, test;
    if (config.dataset.source == Source::Iris) {
        Dataset all = parse_iris_csv(config.dataset.csv);
        all = filter_classes(all, config.dataset.classes);
        std::tie(train, test) =
            stratified_split(all, config.dataset.iris_train_count, config.dataset.split_seed);
    } else {
        train = parse_idx(config.dataset.dir / "train-images-idx3-ubyte",
                          config.dataset.dir / "train-labels-idx1-ubyte", Split::Train,
                          config.dataset.source);
        test = parse_idx(config.dataset.dir / "t10k-images-idx3-ubyte",
                         config.dataset.dir / "t10k-labels-idx1-ubyte", Split::Test,
                         config.dataset.source);
        train = filter_classes(train, config.dataset.classes);
        test = filter_classes(test, config.dataset.classes);
        if (config.dataset.train_subset_per_class > 0)
            train = take_per_class(train, config.dataset.train_subset_per_class);
    }

    std::optional<Reducer> reducer;
    std::optional<FeatureRange> iris_range;
    if (config.dataset.source == Source::Iris)
        iris_range = FeatureRange::fit(train.samples, &std::clog);
    else
        reducer = Reducer::fit(train, config.reducer, config.autoencoder);

    const Preprocessed ptrain =
        transform(config, train, reducer ? &*reducer : nullptr, iris_range ? &*iris_range : nullptr);
    const Preprocessed ptest =
        transform(config, test, reducer ? &*reducer : nullptr, iris_range ? &*iris_range : nullptr);

    std::filesystem::create_directories(config.out_dir / "cache");
    save_cache(config.cache_base(Split::Train), ptrain, cache_meta(config, train).dump());
    save_cache(config.cache_base(Split::Test), ptest, cache_meta(config, test).dump());
    return true;
}

std::pair<Preprocessed, Preprocessed> load_prepared(const ExperimentConfig& config) {
    auto load_split = [&](Split split) {
        std::string meta_str;
        Preprocessed p = load_cache(config.cache_base(split), &meta_str);
        const json meta = json::parse(meta_str, nullptr, false);
        if (meta.is_discarded() ||
            meta.value("prepare_hash", std::uint64_t{0}) != config.prepare_hash())
            throw DataError("cache at " + config.cache_base(split).string() +
                            " is stale for this configuration; run prepare");
        return p;
    };
    return {load_split(Split::Train), load_split(Split::Test)};
}

void save_params(const std::filesystem::path& path, const ParameterVector& params) {
    json doc;
    doc["layout_hash"] = params.layout.hash();
    doc["values"] = params.values;
    json groups = json::array();
    for (const ParamGroup& g : params.layout.groups())
        groups.push_back({{"name", g.name}, {"begin", g.begin}, {"end", g.end}});
    doc["layout"] = groups;
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
    if (!out)
        throw DataError("failed writing " + path.string());
}

std::vector<double> load_params(const std::filesystem::path& path, const ParamLayout& expected) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open parameter file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw DataError("malformed parameter file " + path.string() + ": " + e.what());
    }
    const std::uint64_t hash = doc.value("layout_hash", std::uint64_t{0});
    if (hash != expected.hash())
        throw ConfigError("parameter file " + path.string() +
                          " was saved under a different parameter layout; refusing to evaluate");
    std::vector<double> values = doc.at("values").get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(expected.total()))
        throw ConfigError("parameter file has " + std::to_string(values.size()) +
                          " values, layout expects " + std::to_string(expected.total()));
    return values;
}

void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "iteration,train_loss,test_loss,test_accuracy\n";
    std::size_t e = 0;
    out << std::setprecision(17);
    for (std::size_t i = 0; i < metrics.train_loss.size(); ++i) {
        const int iteration = static_cast<int>(i) + 1;
        out << iteration << ',' << metrics.train_loss[i] << ',';
        if (e < metrics.evals.size() && metrics.evals[e].iteration == iteration) {
            out << metrics.evals[e].test_loss << ',' << metrics.evals[e].test_accuracy;
            ++e;
        } else {
            out << ',';
        }
        out << '\n';
    }
    if (!out)
        throw DataError("failed writing " + path.string());
}

void write_trajectory_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    if (metrics.trajectory.empty())
        throw UsageError("run was executed without record_trajectory");
    out << "iteration";
    for (std::size_t p = 0; p < metrics.trajectory.front().size(); ++p)
        out << ",slot" << p;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < metrics.trajectory.size(); ++i) {
        out << (i + 1);
        for (double v : metrics.trajectory[i])
            out << ',' << v;
        out << '\n';
    }
}

void write_summary_json(const std::filesystem::path& path, const ExperimentConfig& config,
                        const AggregateMetrics& agg) {
    json doc;
    doc["config"] = config.to_json();
    doc["param_count"] = param_count(config.network);
    json runs = json::array();
    for (const RunMetrics& r : agg.runs) {
        runs.push_back({{"seed", r.seed},
                        {"final_test_accuracy", r.final_test_accuracy},
                        {"best_test_accuracy", r.best_test_accuracy},
                        {"final_test_loss", r.final_test_loss},
                        {"wall_seconds", r.wall_seconds}});
    }
    doc["runs"] = runs;
    doc["mean_final_accuracy"] = agg.mean_final_accuracy;
    doc["std_final_accuracy"] = agg.std_final_accuracy;
    doc["wall_seconds"] = agg.wall_seconds;
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
    if (!out)
        throw DataError("failed writing " + path.string());
}

} // namespace qcnn
