#include "divgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace divgen::metrics {

double top1_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    if (pred_labels.size() != true_labels.size()) {
        raise("LengthMismatch", "prediction and label counts differ");
    }
    if (pred_labels.empty()) raise("Empty", "accuracy over zero samples");
    size_t hits = 0;
    for (size_t i = 0; i < pred_labels.size(); ++i) {
        if (pred_labels[i] == true_labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

std::map<ShotBucket, double> bucket_accuracy(const std::vector<int>& pred_labels,
                                             const std::vector<int>& true_labels,
                                             const std::map<int, ShotBucket>& buckets) {
    if (pred_labels.size() != true_labels.size()) {
        raise("LengthMismatch", "prediction and label counts differ");
    }
    std::map<ShotBucket, size_t> total, hits;
    for (size_t i = 0; i < true_labels.size(); ++i) {
        auto it = buckets.find(true_labels[i]);
        if (it == buckets.end()) {
            raise("MissingBucket", "class " + std::to_string(true_labels[i]) + " has no bucket");
        }
        ++total[it->second];
        if (pred_labels[i] == true_labels[i]) ++hits[it->second];
    }
    std::map<ShotBucket, double> out;
    for (const auto& [bucket, n] : total) {
        out[bucket] = static_cast<double>(hits[bucket]) / static_cast<double>(n);
    }
    return out;
}

IsResult inception_score(const Mat& probs, int splits) {
    if (splits < 1) raise("InvalidCount", "splits must be >= 1");
    if (probs.rows < splits) raise("TooFewRows", "need at least one row per split");
    for (int i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < probs.cols; ++j) {
            double p = probs.at(i, j);
            if (p < 0.0 || p > 1.0) {
                raise("RowNotStochastic",
                      "row " + std::to_string(i) + " holds a value outside [0, 1]");
            }
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9) {
            raise("RowNotStochastic", "row " + std::to_string(i) + " sums to " +
                                          std::to_string(sum));
        }
    }

    std::vector<double> scores;
    scores.reserve(static_cast<size_t>(splits));
    for (int s = 0; s < splits; ++s) {
        int begin = static_cast<int>(static_cast<long long>(probs.rows) * s / splits);
        int end = static_cast<int>(static_cast<long long>(probs.rows) * (s + 1) / splits);
        int n = end - begin;
        std::vector<double> marginal(static_cast<size_t>(probs.cols), 0.0);
        for (int i = begin; i < end; ++i) {
            for (int j = 0; j < probs.cols; ++j) marginal[static_cast<size_t>(j)] += probs.at(i, j);
        }
        for (double& q : marginal) q /= n;
        double kl_sum = 0.0;
        for (int i = begin; i < end; ++i) {
            for (int j = 0; j < probs.cols; ++j) {
                double p = probs.at(i, j);
                if (p > 0.0) kl_sum += p * std::log(p / marginal[static_cast<size_t>(j)]);
            }
        }
        scores.push_back(std::exp(kl_sum / n));
    }

    IsResult out;
    for (double s : scores) out.mean += s;
    out.mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - out.mean) * (s - out.mean);
    out.std_dev = std::sqrt(var / static_cast<double>(scores.size()));
    return out;
}

std::vector<int> knn_classify(const Mat& train_feats, const std::vector<int>& train_labels,
                              const Mat& queries, int k, KnnMetric metric) {
    if (k < 1) raise("InvalidCount", "k must be >= 1");
    if (k > train_feats.rows) raise("KTooLarge", "k exceeds the training set size");
    if (static_cast<int>(train_labels.size()) != train_feats.rows) {
        raise("LengthMismatch", "training labels and features differ in count");
    }
    if (queries.cols != train_feats.cols) raise("DimMismatch", "query dim differs from training dim");

    std::vector<double> train_norms(static_cast<size_t>(train_feats.rows), 0.0);
    if (metric == KnnMetric::Cosine) {
        for (int i = 0; i < train_feats.rows; ++i) {
            double sq = 0.0;
            for (int j = 0; j < train_feats.cols; ++j) sq += train_feats.at(i, j) * train_feats.at(i, j);
            if (sq <= 0.0) raise("ZeroNormFeature", "training row " + std::to_string(i) +
                                                        " has zero norm");
            train_norms[static_cast<size_t>(i)] = std::sqrt(sq);
        }
    }

    std::vector<int> out;
    out.reserve(static_cast<size_t>(queries.rows));
    std::vector<std::pair<double, int>> dist(static_cast<size_t>(train_feats.rows));
    for (int q = 0; q < queries.rows; ++q) {
        double qnorm = 0.0;
        if (metric == KnnMetric::Cosine) {
            for (int j = 0; j < queries.cols; ++j) qnorm += queries.at(q, j) * queries.at(q, j);
            if (qnorm <= 0.0) raise("ZeroNormFeature", "query row " + std::to_string(q) +
                                                           " has zero norm");
            qnorm = std::sqrt(qnorm);
        }
        for (int i = 0; i < train_feats.rows; ++i) {
            double d;
            if (metric == KnnMetric::Cosine) {
                double dot = 0.0;
                for (int j = 0; j < queries.cols; ++j) dot += queries.at(q, j) * train_feats.at(i, j);
                d = 1.0 - dot / (qnorm * train_norms[static_cast<size_t>(i)]);
            } else {
                d = 0.0;
                for (int j = 0; j < queries.cols; ++j) {
                    double diff = queries.at(q, j) - train_feats.at(i, j);
                    d += diff * diff;
                }
            }
            dist[static_cast<size_t>(i)] = {d, i};
        }
        // Ties in distance resolve to the lower training index.
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::map<int, int> votes;
        for (int i = 0; i < k; ++i) ++votes[train_labels[static_cast<size_t>(dist[static_cast<size_t>(i)].second)]];
        int best_label = -1, best_votes = -1;
        for (const auto& [label, n] : votes) {
            if (n > best_votes) { // map order makes ties pick the smallest label
                best_votes = n;
                best_label = label;
            }
        }
        out.push_back(best_label);
    }
    return out;
}

std::string report_to_json(const MetricReport& report) {
    if (report.is_mean < 1.0 - 1e-9) raise("InvalidReport", "inception score mean below 1");
    nlohmann::json j = {
        {"top1", report.top1},
        {"per_bucket", report.per_bucket},
        {"is_mean", report.is_mean},
        {"is_std", report.is_std},
    };
    return j.dump();
}

MetricReport report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) raise("ReportParseError", "metric report is not valid JSON");
    MetricReport r;
    r.top1 = j.at("top1").get<double>();
    if (j.contains("per_bucket")) {
        r.per_bucket = j["per_bucket"].get<std::map<std::string, double>>();
    }
    r.is_mean = j.at("is_mean").get<double>();
    r.is_std = j.at("is_std").get<double>();
    return r;
}

Mat read_prob_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise("IoError", "cannot open probability csv: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                raise("CsvParseError", "bad number in " + path.string() + ": " + cell);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            raise("CsvParseError", "ragged rows in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) raise("Empty", "probability csv holds no rows");
    Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) m.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    return m;
}

} // namespace divgen::metrics
