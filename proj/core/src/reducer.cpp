#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "qcnn/datapipe.hpp"
#include "qcnn/errors.hpp"
#include "qcnn/rng.hpp"

namespace qcnn {

namespace {

constexpr int kComponents = 8;

void require_train_split(const Dataset& ds) {
    if (ds.split != Split::Train)
        throw UsageError("reducers are fitted on the training split only");
    if (ds.size() == 0)
        throw UsageError("cannot fit a reducer on an empty dataset");
}

Eigen::MatrixXd to_eigen(const FeatureMatrix& m) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(m.data.data(), m.rows, m.cols);
}

Reducer fit_pca(const Dataset& train) {
    const std::size_t dim = train.samples.cols;
    if (dim < kComponents)
        throw UsageError("PCA needs at least " + std::to_string(kComponents) +
                         " input features, got " + std::to_string(dim));

    const Eigen::MatrixXd x = to_eigen(train.samples);
    const Eigen::VectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / std::max<double>(1.0, double(train.size()) - 1.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw Error("PCA eigendecomposition failed");

    // Eigenvalues come out ascending; take the top components and fix each
    // sign so the largest-magnitude entry is positive.
    Eigen::MatrixXd components(kComponents, dim);
    for (int k = 0; k < kComponents; ++k) {
        Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - k);
        int arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0)
            v = -v;
        components.row(k) = v.transpose();
    }

    Reducer r;
    r.kind_ = ReducerKind::PCA8;
    r.components_ = std::move(components);
    r.mean_ = mean;
    return r;
}

struct AeActivations {
    Eigen::MatrixXd h1, z, h2, y;
};

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& m) {
    return 1.0 / (1.0 + (-m.array()).exp());
}

} // namespace

Reducer fit_autoencoder(const Dataset& train, const AutoencoderOptions& opt) {
    const int dim = static_cast<int>(train.samples.cols);
    Rng rng(opt.seed);

    auto glorot = [&rng](int rows, int cols) {
        Eigen::MatrixXd w(rows, cols);
        const double r = std::sqrt(6.0 / (rows + cols));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                w(i, j) = (2.0 * rng.uniform() - 1.0) * r;
        return w;
    };

    Eigen::MatrixXd w1 = glorot(opt.hidden, dim), w3 = glorot(opt.hidden, opt.bottleneck);
    Eigen::MatrixXd w2 = glorot(opt.bottleneck, opt.hidden), w4 = glorot(dim, opt.hidden);
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(opt.hidden);
    Eigen::VectorXd b2 = Eigen::VectorXd::Zero(opt.bottleneck);
    Eigen::VectorXd b3 = Eigen::VectorXd::Zero(opt.hidden);
    Eigen::VectorXd b4 = Eigen::VectorXd::Zero(dim);

    auto forward = [&](const Eigen::MatrixXd& x, AeActivations& act) {
        act.h1 = sigmoid((w1 * x).colwise() + b1);
        act.z = (w2 * act.h1).colwise() + b2;
        act.h2 = sigmoid((w3 * act.z).colwise() + b3);
        act.y = sigmoid((w4 * act.h2).colwise() + b4);
    };

    // Seeded shuffle, then hold out the head as the validation slice.
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);
    const std::size_t n_val =
        std::max<std::size_t>(1, static_cast<std::size_t>(n * opt.validation_fraction));

    const Eigen::MatrixXd all = to_eigen(train.samples).transpose(); // dim x n
    Eigen::MatrixXd val(dim, n_val), tr(dim, n - n_val);
    for (std::size_t i = 0; i < n_val; ++i)
        val.col(i) = all.col(order[i]);
    for (std::size_t i = n_val; i < n; ++i)
        tr.col(i - n_val) = all.col(order[i]);

    auto val_mse = [&]() {
        AeActivations act;
        forward(val, act);
        return (act.y - val).squaredNorm() / double(val.size());
    };

    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    const std::size_t n_tr = n - n_val;
    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        for (std::size_t start = 0; start < n_tr; start += opt.batch_size) {
            const std::size_t b = std::min<std::size_t>(opt.batch_size, n_tr - start);
            const Eigen::MatrixXd x = tr.middleCols(start, b);
            AeActivations act;
            forward(x, act);

            auto sig_grad = [](const Eigen::MatrixXd& s) {
                return (s.array() * (1.0 - s.array())).matrix().eval();
            };
            const double scale = 2.0 / double(x.size());
            Eigen::MatrixXd d4 = ((act.y - x) * scale).cwiseProduct(sig_grad(act.y));
            Eigen::MatrixXd d3 = (w4.transpose() * d4).cwiseProduct(sig_grad(act.h2));
            Eigen::MatrixXd d2 = w3.transpose() * d3;
            Eigen::MatrixXd d1 = (w2.transpose() * d2).cwiseProduct(sig_grad(act.h1));

            w4 -= opt.learning_rate * (d4 * act.h2.transpose());
            b4 -= opt.learning_rate * d4.rowwise().sum();
            w3 -= opt.learning_rate * (d3 * act.z.transpose());
            b3 -= opt.learning_rate * d3.rowwise().sum();
            w2 -= opt.learning_rate * (d2 * act.h1.transpose());
            b2 -= opt.learning_rate * d2.rowwise().sum();
            w1 -= opt.learning_rate * (d1 * x.transpose());
            b1 -= opt.learning_rate * d1.rowwise().sum();
        }
        const double mse = val_mse();
        if (mse < best - opt.min_delta) {
            best = mse;
            stale = 0;
        } else if (++stale >= opt.patience) {
            break;
        }
    }

    Reducer r;
    r.kind_ = ReducerKind::Autoencoder8;
    r.encoder_.push_back({std::move(w1), std::move(b1), true});
    r.encoder_.push_back({std::move(w2), std::move(b2), false});
    r.decoder_.push_back({std::move(w3), std::move(b3), true});
    r.decoder_.push_back({std::move(w4), std::move(b4), true});
    return r;
}

Reducer Reducer::fit(const Dataset& train, ReducerKind kind, const AutoencoderOptions& options) {
    require_train_split(train);
    Reducer r;
    switch (kind) {
    case ReducerKind::PCA8:
        r = fit_pca(train);
        break;
    case ReducerKind::Autoencoder8:
        r = fit_autoencoder(train, options);
        break;
    case ReducerKind::Resize16:
    case ReducerKind::None:
        r.kind_ = kind;
        break;
    }

    // Learn the per-feature range of the reduced training features; it
    // drives angle scaling and stays frozen for test data.
    if (r.output_dim() > 0 && kind != ReducerKind::Resize16) {
        FeatureMatrix reduced(train.size(), r.output_dim());
        for (std::size_t i = 0; i < train.size(); ++i) {
            const std::vector<double> f = r.apply(train.samples.row(i));
            std::copy(f.begin(), f.end(), reduced.row(i).begin());
        }
        r.range_ = FeatureRange::fit(reduced, &std::clog);
    }
    return r;
}

int Reducer::output_dim() const {
    switch (kind_) {
    case ReducerKind::Resize16: return 256;
    case ReducerKind::PCA8:
    case ReducerKind::Autoencoder8: return kComponents;
    case ReducerKind::None: return 0;
    }
    return 0;
}

std::vector<double> Reducer::apply(std::span<const double> sample) const {
    switch (kind_) {
    case ReducerKind::Resize16:
        return resize_16(sample);
    case ReducerKind::PCA8: {
        if (sample.size() != static_cast<std::size_t>(mean_.size()))
            throw UsageError("sample length does not match fitted PCA dimension");
        const Eigen::Map<const Eigen::VectorXd> x(sample.data(), sample.size());
        const Eigen::VectorXd y = components_ * (x - mean_);
        return {y.data(), y.data() + y.size()};
    }
    case ReducerKind::Autoencoder8: {
        Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(sample.data(), sample.size());
        for (const AeLayer& l : encoder_) {
            h = (l.w * h + l.b).eval();
            if (l.sigmoid)
                h = sigmoid(h);
        }
        return {h.data(), h.data() + h.size()};
    }
    case ReducerKind::None:
        return {sample.begin(), sample.end()};
    }
    throw Error("unknown reducer kind");
}

double Reducer::reconstruction_mse(const Dataset& ds) const {
    if (ds.size() == 0)
        throw UsageError("empty dataset");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = ds.samples.row(i);
        std::vector<double> rec;
        if (kind_ == ReducerKind::PCA8) {
            const Eigen::Map<const Eigen::VectorXd> x(row.data(), row.size());
            const Eigen::VectorXd y = mean_ + components_.transpose() * (components_ * (x - mean_));
            rec.assign(y.data(), y.data() + y.size());
        } else if (kind_ == ReducerKind::Autoencoder8) {
            Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(row.data(), row.size());
            for (const AeLayer& l : encoder_) {
                h = (l.w * h + l.b).eval();
                if (l.sigmoid)
                    h = sigmoid(h);
            }
            for (const AeLayer& l : decoder_) {
                h = (l.w * h + l.b).eval();
                if (l.sigmoid)
                    h = sigmoid(h);
            }
            rec.assign(h.data(), h.data() + h.size());
        } else {
            throw UsageError("reconstruction is only defined for PCA and autoencoder reducers");
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double d = rec[c] - row[c];
            total += d * d;
        }
    }
    return total / double(ds.size() * ds.samples.cols);
}

} // namespace qcnn
