#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "revt/common.hpp"
#include "revt/image.hpp"
#include "revt/params.hpp"
#include "revt/synthdata.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// Confusion-matrix based mIoU
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    int classes = 0;
    std::vector<int64_t> counts;  // counts[gt * classes + pred]
    int64_t ignored = 0;

    explicit ConfusionMatrix(int s = 0)
        : classes(s), counts(static_cast<size_t>(s) * static_cast<size_t>(s), 0) {}

    void add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
        if (pred.size() != gt.size())
            throw DimensionError("confusion: prediction/label size mismatch");
        for (size_t i = 0; i < pred.size(); ++i) {
            if (gt[i] == kIgnoreLabel) {
                ++ignored;
                continue;
            }
            if (gt[i] >= classes || pred[i] >= classes)
                throw UsageError("confusion: label outside class range");
            ++counts[static_cast<size_t>(gt[i]) * classes + pred[i]];
        }
    }

    void merge(const ConfusionMatrix& o) {
        if (o.classes != classes) throw DimensionError("confusion: class count mismatch");
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        ignored += o.ignored;
    }

    int64_t at(int gt, int pred) const {
        return counts[static_cast<size_t>(gt) * classes + pred];
    }
    int64_t total() const {
        int64_t t = 0;
        for (int64_t c : counts) t += c;
        return t;
    }
};

struct EvalReport {
    int classes = 0;
    std::vector<double> per_class_iou;  // meaningful where class_valid
    std::vector<bool> class_valid;      // union > 0
    std::vector<int> class_subset;      // classes entering the mean
    double miou = 0.0;
};

// IoU_s = TP / (TP + FP + FN); classes with empty union are excluded from the
// mean, as are classes outside the subset. Ignored pixels never enter the
// matrix.
inline EvalReport miou_from_confusion(const ConfusionMatrix& cm,
                                      const std::vector<int>& subset = {}) {
    if (cm.total() == 0) throw UsageError("miou: empty evaluation set");
    EvalReport r;
    r.classes = cm.classes;
    r.per_class_iou.assign(static_cast<size_t>(cm.classes), 0.0);
    r.class_valid.assign(static_cast<size_t>(cm.classes), false);
    std::set<int> keep(subset.begin(), subset.end());
    for (int s = 0; s < cm.classes; ++s) {
        if (subset.empty())
            r.class_subset.push_back(s);
        else if (keep.count(s))
            r.class_subset.push_back(s);
    }

    double acc = 0.0;
    int64_t used = 0;
    for (int s : r.class_subset) {
        const int64_t tp = cm.at(s, s);
        int64_t fp = 0, fn = 0;
        for (int o = 0; o < cm.classes; ++o) {
            if (o == s) continue;
            fp += cm.at(o, s);
            fn += cm.at(s, o);
        }
        const int64_t uni = tp + fp + fn;
        if (uni == 0) continue;  // absent from predictions and labels alike
        const double iou = static_cast<double>(tp) / static_cast<double>(uni);
        r.per_class_iou[static_cast<size_t>(s)] = iou;
        r.class_valid[static_cast<size_t>(s)] = true;
        acc += iou;
        ++used;
    }
    if (used == 0) throw UsageError("miou: no class with non-empty union in the subset");
    r.miou = acc / static_cast<double>(used);
    return r;
}

inline EvalReport miou(const std::vector<std::vector<uint8_t>>& predictions,
                       const std::vector<std::vector<uint8_t>>& labels, int classes,
                       const std::vector<int>& subset = {}) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw UsageError("miou: empty or mismatched evaluation set");
    ConfusionMatrix cm(classes);
    for (size_t i = 0; i < predictions.size(); ++i) cm.add(predictions[i], labels[i]);
    return miou_from_confusion(cm, subset);
}

// ---------------------------------------------------------------------------
// Aggregation helpers (domain-group means, across-model deviation)
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw UsageError("mean of empty set");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// population standard deviation
inline double stddev_of(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Cosine similarity between parameter trees (f64 accumulation)
// ---------------------------------------------------------------------------

namespace detail {
inline double cosine_of_buffers(const std::vector<const Tensor*>& a,
                                const std::vector<const Tensor*>& b, const std::string& what) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t t = 0; t < a.size(); ++t) {
        const float* pa = a[t]->data();
        const float* pb = b[t]->data();
        const int64_t n = a[t]->numel();
        for (int64_t i = 0; i < n; ++i) {
            dot += static_cast<double>(pa[i]) * pb[i];
            na += static_cast<double>(pa[i]) * pa[i];
            nb += static_cast<double>(pb[i]) * pb[i];
        }
    }
    if (na == 0.0 || nb == 0.0)
        throw UsageError("cosine similarity undefined for zero-norm vector in " + what);
    return dot / (std::sqrt(na) * std::sqrt(nb));
}
}  // namespace detail

// Mean over model pairs of the cosine between the flattened parameters inside
// the scope.
inline double cosine_mean(const std::vector<const ParamTree*>& trees, const Selector& scope) {
    if (trees.size() < 2) throw UsageError("cosine: need at least two trees");
    std::string mismatch;
    for (size_t m = 1; m < trees.size(); ++m)
        if (!trees[0]->same_structure(*trees[m], &mismatch))
            throw MergeError("cosine: tree structure mismatch at " + mismatch);

    std::vector<std::string> paths;
    for (const auto& [path, e] : *trees[0])
        if (scope.matches(path, e)) paths.push_back(path);
    if (paths.empty()) throw UsageError("cosine: scope selects no parameters");

    double acc = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < trees.size(); ++i) {
        for (size_t j = i + 1; j < trees.size(); ++j) {
            std::vector<const Tensor*> a, b;
            for (const std::string& p : paths) {
                a.push_back(&trees[i]->at(p).tensor);
                b.push_back(&trees[j]->at(p).tensor);
            }
            acc += detail::cosine_of_buffers(a, b, "scope " + scope.describe());
            ++pairs;
        }
    }
    return acc / static_cast<double>(pairs);
}

// Per-path mean pairwise cosine, lexicographic path order.
inline std::map<std::string, double> cosine_per_layer(
    const std::vector<const ParamTree*>& trees) {
    if (trees.size() < 2) throw UsageError("cosine: need at least two trees");
    std::string mismatch;
    for (size_t m = 1; m < trees.size(); ++m)
        if (!trees[0]->same_structure(*trees[m], &mismatch))
            throw MergeError("cosine: tree structure mismatch at " + mismatch);

    std::map<std::string, double> out;
    for (const auto& [path, e] : *trees[0]) {
        double acc = 0.0;
        int64_t pairs = 0;
        for (size_t i = 0; i < trees.size(); ++i)
            for (size_t j = i + 1; j < trees.size(); ++j) {
                acc += detail::cosine_of_buffers({&trees[i]->at(path).tensor},
                                                 {&trees[j]->at(path).tensor}, path);
                ++pairs;
            }
        out[path] = acc / static_cast<double>(pairs);
    }
    return out;
}

}  // namespace revt
