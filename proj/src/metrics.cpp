#include "featrestore/metrics.hpp"

#include "featrestore/log.hpp"

#include <stdexcept>

namespace featrestore {

double cosine_alignment(const Vector& restored, const Vector& truth) {
    if (restored.size() != truth.size()) {
        throw std::invalid_argument("cosine_alignment: dimension mismatch");
    }
    const double na = restored.norm();
    const double nb = truth.norm();
    if (na == 0.0 || nb == 0.0) {
        log_warn("cosine_alignment: zero vector, similarity defined as 0");
        return 0.0;
    }
    return std::clamp(restored.dot(truth) / (na * nb), -1.0, 1.0);
}

Matrix category_similarity_matrix(const Matrix& features, const std::vector<int>& labels, int n_classes) {
    if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
        throw std::invalid_argument("category_similarity_matrix: label count mismatch");
    }
    Matrix means = Matrix::Zero(n_classes, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || c >= n_classes) throw std::invalid_argument("label out of range");
        means.row(c) += features.row(static_cast<Eigen::Index>(i));
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < n_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) means.row(c) /= counts[static_cast<std::size_t>(c)];
    }
    Matrix sim = Matrix::Zero(n_classes, n_classes);
    for (int i = 0; i < n_classes; ++i) {
        sim(i, i) = 1.0;
        for (int j = i + 1; j < n_classes; ++j) {
            const double ni = means.row(i).norm();
            const double nj = means.row(j).norm();
            const double v = (ni == 0.0 || nj == 0.0) ? 0.0 : means.row(i).dot(means.row(j)) / (ni * nj);
            sim(i, j) = v;
            sim(j, i) = v;
        }
    }
    return sim;
}

Eigen::MatrixXi confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int n_classes) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("confusion_matrix: size mismatch");
    }
    Eigen::MatrixXi cm = Eigen::MatrixXi::Zero(n_classes, n_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 || predicted[i] >= n_classes) {
            throw std::invalid_argument("confusion_matrix: class id out of range");
        }
        ++cm(truth[i], predicted[i]);
    }
    return cm;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size() || truth.empty()) {
        throw std::invalid_argument("accuracy: empty or mismatched inputs");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted, int n_classes) {
    const Eigen::MatrixXi cm = confusion_matrix(truth, predicted, n_classes);
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        const double tp = cm(c, c);
        const double fp = cm.col(c).sum() - tp;
        const double fn = cm.row(c).sum() - tp;
        sum += tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    }
    return sum / n_classes;
}

Matrix Pca::project(const Matrix& rows) const {
    Matrix centered = rows.rowwise() - mean.transpose();
    return centered * components.transpose();
}

Pca fit_pca(const Matrix& data, int k) {
    if (data.rows() < 2 || k < 1 || k > data.cols()) {
        throw std::invalid_argument("fit_pca: need >= 2 rows and 1 <= k <= d");
    }
    Pca p;
    p.mean = data.colwise().mean().transpose();
    Eigen::MatrixXd centered = data.rowwise() - p.mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    p.components.resize(k, data.cols());
    p.explained_variance.resize(k);
    for (int i = 0; i < k; ++i) {
        const Eigen::Index col = data.cols() - 1 - i;  // eigenvalues ascend
        Eigen::VectorXd v = es.eigenvectors().col(col);
        // Deterministic sign: largest-magnitude entry positive.
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        p.components.row(i) = v.transpose();
        p.explained_variance(i) = es.eigenvalues()(col);
    }
    return p;
}

}  // namespace featrestore
