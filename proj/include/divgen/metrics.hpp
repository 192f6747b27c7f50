#pragma once
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "divgen/dataset.hpp"
#include "divgen/error.hpp"
#include "divgen/mat.hpp"

namespace divgen::metrics {

using dataset::ShotBucket;

double top1_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels);

// Accuracy per shot bucket; buckets with no samples are absent from the
// result. Every true label must have a bucket assignment.
std::map<ShotBucket, double> bucket_accuracy(const std::vector<int>& pred_labels,
                                             const std::vector<int>& true_labels,
                                             const std::map<int, ShotBucket>& buckets);

struct IsResult {
    double mean = 0.0;
    double std_dev = 0.0;
};

// exp(mean KL(p_i || marginal)) over `splits` contiguous chunks;
// natural log, 0 * ln(0/q) = 0. Returns mean and population std of the
// per-chunk scores.
IsResult inception_score(const Mat& probs, int splits = 1);

enum class KnnMetric { Cosine, Euclidean };

// Majority vote over the k nearest training rows. Distance ties break
// toward the lower training index, vote ties toward the smaller label.
std::vector<int> knn_classify(const Mat& train_feats, const std::vector<int>& train_labels,
                              const Mat& queries, int k, KnnMetric metric = KnnMetric::Cosine);

struct MetricReport {
    double top1 = 0.0;
    std::map<std::string, double> per_bucket;
    double is_mean = 1.0;
    double is_std = 0.0;
};

std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

// CSV, one row of probabilities per sample.
Mat read_prob_csv(const std::filesystem::path& path);

} // namespace divgen::metrics
