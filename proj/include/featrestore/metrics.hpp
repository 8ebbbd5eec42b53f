#pragma once

#include "featrestore/autograd.hpp"

#include <vector>

namespace featrestore {

/// Cosine similarity; 0 (with a warning) when either vector is zero.
double cosine_alignment(const Vector& restored, const Vector& truth);

/// Entry (i, j) is the cosine between the mean feature of class i and of
/// class j. Classes with no samples get a zero row/column except the diagonal.
Matrix category_similarity_matrix(const Matrix& features, const std::vector<int>& labels, int n_classes);

/// counts(i, j): samples with truth i predicted as j.
Eigen::MatrixXi confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 int n_classes);
double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);
/// Unweighted mean of per-class F1 over all n_classes; F1 is 0 for a class
/// with no true positives.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted, int n_classes);

/// Principal axes fitted on rows of `data`.
struct Pca {
    Vector mean;
    Matrix components;  ///< k x d, rows are unit principal directions
    Vector explained_variance;

    Matrix project(const Matrix& rows) const;
};
Pca fit_pca(const Matrix& data, int k);

}  // namespace featrestore
