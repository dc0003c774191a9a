#include "cssl/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <tuple>

#include "format.hpp"

namespace cssl {

std::size_t PseudoLabelRecord::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

LabelMask PseudoLabelRecord::effective_labels() const {
  LabelMask out = labels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!valid[i]) out[i] = kIgnore;
  }
  return out;
}

PseudoLabelRecord record_from_probs(const TensorF& probs) {
  PseudoLabelRecord rec;
  rec.labels = argmax_channel(probs);
  const std::size_t plane = rec.labels.size();
  rec.confidence.resize(plane);
  rec.valid.assign(plane, 1);
  for (std::size_t i = 0; i < plane; ++i) {
    rec.confidence[i] = std::clamp(probs[rec.labels[i] * plane + i], 0.0f, 1.0f);
  }
  return rec;
}

PseudoLabelRecord generate_pseudo_labels(const SegModel& teacher, const Image& image) {
  return record_from_probs(softmax_channel(forward(teacher, image)));
}

PseudoLabelRecord average_views(std::span<const TensorF> view_probs) {
  if (view_probs.empty()) throw ArgumentError("average_views: no views");
  TensorF avg(view_probs.front().shape(), 0.0f);
  for (const TensorF& p : view_probs) {
    if (p.shape() != avg.shape()) throw ShapeError("average_views: view shape mismatch");
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += p[i];
  }
  const float inv = 1.0f / static_cast<float>(view_probs.size());
  for (float& v : avg.data()) v *= inv;
  return record_from_probs(avg);
}

namespace {

TensorF hflip_planes(const TensorF& t) {
  TensorF out(t.shape());
  const std::size_t c = t.extent(0), h = t.extent(1), w = t.extent(2);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(k, y, x) = t.at(k, y, w - 1 - x);
    }
  }
  return out;
}

}  // namespace

PseudoLabelRecord ensemble_confidence(const SegModel& teacher, const Image& image,
                                      std::size_t n_views) {
  if (n_views == 0) throw ArgumentError("ensemble_confidence: n_views must be >= 1");
  const TensorF identity = softmax_channel(forward(teacher, image));
  if (n_views == 1) return record_from_probs(identity);
  const TensorF flipped = hflip_planes(softmax_channel(forward(teacher, hflip(image))));
  std::vector<TensorF> views;
  views.reserve(n_views);
  for (std::size_t v = 0; v < n_views; ++v) views.push_back(v % 2 == 0 ? identity : flipped);
  return average_views(views);
}

std::uint64_t ClassHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::size_t confidence_bin(float confidence, std::size_t bins) {
  const double c = std::clamp(static_cast<double>(confidence), 0.0, 1.0);
  return std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
}

std::vector<ClassHistogram> class_histograms(std::span<const PseudoLabelRecord> records,
                                             std::size_t classes, std::size_t bins) {
  if (bins < 10) throw ArgumentError("class_histograms: at least 10 bins required");
  std::vector<ClassHistogram> hists(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    hists[c].class_id = static_cast<std::uint8_t>(c);
    hists[c].counts.assign(bins, 0);
  }
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      const std::uint8_t y = rec.labels[i];
      if (!rec.valid[i] || y == kIgnore) continue;
      if (y >= classes) throw ArgumentError("class_histograms: label out of range");
      ++hists[y].counts[confidence_bin(rec.confidence[i], bins)];
    }
  }
  return hists;
}

std::vector<double> classwise_thresholds(std::span<const ClassHistogram> histograms, double q) {
  if (!(q >= 0.0 && q < 1.0)) throw ArgumentError("classwise_thresholds: q must be in [0,1)");
  std::vector<double> thresholds;
  thresholds.reserve(histograms.size());
  for (const auto& h : histograms) {
    const auto total = static_cast<double>(h.total());
    double thr = 0.0;
    if (total > 0.0 && q > 0.0) {
      // Last edge below which at most q of the class lies. Taking the first edge
      // reaching q instead would drop a whole class whose mass sits in the top bin.
      const double target = q * total;
      std::uint64_t cum = 0;
      std::size_t edge = 0;
      while (edge < h.bins() && static_cast<double>(cum + h.counts[edge]) <= target) cum += h.counts[edge++];
      thr = h.bin_lo(edge);
    }
    thresholds.push_back(thr);
  }
  return thresholds;
}

void filter_inplace(std::span<PseudoLabelRecord> records, std::span<const double> thresholds) {
  for (auto& rec : records) {
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      const std::uint8_t y = rec.labels[i];
      if (!rec.valid[i] || y == kIgnore) continue;
      if (y >= thresholds.size()) throw ArgumentError("filter: no threshold for class");
      if (static_cast<double>(rec.confidence[i]) < thresholds[y]) rec.valid[i] = 0;
    }
  }
}

std::vector<PseudoLabelRecord> filter(std::span<const PseudoLabelRecord> records,
                                      std::span<const double> thresholds) {
  std::vector<PseudoLabelRecord> out(records.begin(), records.end());
  filter_inplace(out, thresholds);
  return out;
}

std::vector<double> filter_by_quantile(std::span<PseudoLabelRecord> records,
                                       std::size_t classes, double q, std::size_t bins) {
  const auto hists = class_histograms(records, classes, bins);
  auto thresholds = classwise_thresholds(hists, q);
  if (q > 0.0) filter_inplace(records, thresholds);
  return thresholds;
}

namespace {

struct RankedPixel {
  float confidence;
  std::uint32_t record;
  std::uint32_t pixel;
};

// Valid pixels per class, ascending by confidence with stable positional ties.
std::vector<std::vector<RankedPixel>> rank_by_class(std::span<const PseudoLabelRecord> records,
                                                    std::size_t classes) {
  std::vector<std::vector<RankedPixel>> ranked(classes);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      const std::uint8_t y = rec.labels[i];
      if (!rec.valid[i] || y == kIgnore) continue;
      if (y >= classes) throw ArgumentError("decile_split: label out of range");
      ranked[y].push_back({rec.confidence[i], static_cast<std::uint32_t>(r),
                           static_cast<std::uint32_t>(i)});
    }
  }
  for (auto& v : ranked) {
    std::stable_sort(v.begin(), v.end(), [](const RankedPixel& a, const RankedPixel& b) {
      return a.confidence < b.confidence;
    });
  }
  return ranked;
}

std::size_t decile_of(std::size_t rank, std::size_t n) { return rank * kDeciles / n; }

}  // namespace

std::array<ValiditySet, kDeciles> decile_split(std::span<const PseudoLabelRecord> records,
                                               std::size_t classes) {
  std::array<ValiditySet, kDeciles> subsets;
  for (auto& s : subsets) {
    s.reserve(records.size());
    for (const auto& rec : records) s.emplace_back(rec.labels.size(), 0);
  }
  const auto ranked = rank_by_class(records, classes);
  for (const auto& v : ranked) {
    for (std::size_t k = 0; k < v.size(); ++k) {
      subsets[decile_of(k, v.size())][v[k].record][v[k].pixel] = 1;
    }
  }
  return subsets;
}

std::vector<PseudoLabelRecord> with_validity(std::span<const PseudoLabelRecord> records,
                                             const ValiditySet& validity) {
  if (validity.size() != records.size()) throw ShapeError("with_validity: count mismatch");
  std::vector<PseudoLabelRecord> out(records.begin(), records.end());
  for (std::size_t r = 0; r < out.size(); ++r) {
    if (validity[r].size() != out[r].valid.size()) {
      throw ShapeError("with_validity: mask size mismatch");
    }
    out[r].valid = validity[r];
  }
  return out;
}

std::vector<std::size_t> boundary_distance(const LabelMask& labels) {
  const std::size_t h = labels.height();
  const std::size_t w = labels.width();
  const std::size_t n = labels.size();
  std::vector<std::size_t> result(n, kNoBoundary);
  std::array<bool, 256> present{};
  for (std::size_t i = 0; i < n; ++i) present[labels[i]] = true;
  present[kIgnore] = false;

  std::vector<std::size_t> dist(n);
  std::deque<std::size_t> queue;
  for (std::size_t a = 0; a < kIgnore; ++a) {
    if (!present[a]) continue;
    // Multi-source BFS on the 8-connected grid from every pixel of another class.
    std::fill(dist.begin(), dist.end(), kNoBoundary);
    queue.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != a && labels[i] != kIgnore) {
        dist[i] = 0;
        queue.push_back(i);
      }
    }
    if (queue.empty()) continue;
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const long y = static_cast<long>(i / w);
      const long x = static_cast<long>(i % w);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long ny = y + dy, nx = x + dx;
          if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= static_cast<long>(h) ||
              nx >= static_cast<long>(w)) {
            continue;
          }
          const auto j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (dist[j] == kNoBoundary) {
            dist[j] = dist[i] + 1;
            queue.push_back(j);
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == a) result[i] = dist[i];
    }
  }
  return result;
}

BoundarySplit boundary_distance_split(const LabelMask& labels, std::size_t d) {
  if (d == 0) throw ArgumentError("boundary_distance_split: d must be >= 1");
  const auto dist = boundary_distance(labels);
  BoundarySplit split{std::vector<std::uint8_t>(labels.size(), 0),
                      std::vector<std::uint8_t>(labels.size(), 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnore) continue;
    if (dist[i] <= d) {
      split.near[i] = 1;
    } else {
      split.far[i] = 1;
    }
  }
  return split;
}

BoundaryStats boundary_confidence(std::span<const PseudoLabelRecord> records, std::size_t d) {
  BoundaryStats s;
  double near_sum = 0.0, far_sum = 0.0;
  for (const auto& rec : records) {
    const auto split = boundary_distance_split(rec.labels, d);
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      if (!rec.valid[i]) continue;
      if (split.near[i]) {
        near_sum += rec.confidence[i];
        ++s.near_count;
      } else if (split.far[i]) {
        far_sum += rec.confidence[i];
        ++s.far_count;
      }
    }
  }
  if (s.near_count) s.near_mean_confidence = near_sum / static_cast<double>(s.near_count);
  if (s.far_count) s.far_mean_confidence = far_sum / static_cast<double>(s.far_count);
  return s;
}

std::vector<std::optional<double>> precision(std::span<const PseudoLabelRecord> records,
                                             std::span<const LabelMask> truth,
                                             std::size_t classes) {
  if (records.size() != truth.size()) throw ShapeError("precision: record/truth count mismatch");
  std::vector<std::uint64_t> correct(classes, 0), total(classes, 0);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (truth[r].size() != rec.labels.size()) throw ShapeError("precision: mask size mismatch");
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      const std::uint8_t y = rec.labels[i];
      if (!rec.valid[i] || y == kIgnore || truth[r][i] == kIgnore) continue;
      if (y >= classes) throw ArgumentError("precision: label out of range");
      ++total[y];
      if (truth[r][i] == y) ++correct[y];
    }
  }
  std::vector<std::optional<double>> out(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (total[c]) out[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
  }
  return out;
}

std::optional<double> mean_precision(std::span<const PseudoLabelRecord> records,
                                     std::span<const LabelMask> truth, std::size_t classes) {
  const auto per_class = precision(records, truth, classes);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : per_class) {
    if (p) {
      sum += *p;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<DecileRow> decile_report(std::span<const PseudoLabelRecord> records,
                                     std::span<const LabelMask> truth, std::size_t classes) {
  if (records.size() != truth.size()) throw ShapeError("decile_report: record/truth count mismatch");
  const auto ranked = rank_by_class(records, classes);
  std::vector<DecileRow> rows;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& v = ranked[c];
    if (v.empty()) continue;
    std::array<DecileRow, kDeciles> acc{};
    std::array<double, kDeciles> conf_sum{};
    std::array<std::uint64_t, kDeciles> scored{}, correct{};
    for (std::size_t k = 0; k < v.size(); ++k) {
      const std::size_t d = decile_of(k, v.size());
      ++acc[d].pixel_count;
      conf_sum[d] += v[k].confidence;
      const std::uint8_t t = truth[v[k].record][v[k].pixel];
      if (t == kIgnore) continue;
      ++scored[d];
      if (t == c) ++correct[d];
    }
    for (std::size_t d = 0; d < kDeciles; ++d) {
      DecileRow row;
      row.class_id = c;
      row.decile = d + 1;
      row.pixel_count = acc[d].pixel_count;
      if (scored[d]) row.precision = static_cast<double>(correct[d]) / static_cast<double>(scored[d]);
      if (row.pixel_count) row.mean_confidence = conf_sum[d] / static_cast<double>(row.pixel_count);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string histograms_csv(std::span<const ClassHistogram> histograms) {
  std::ostringstream os;
  os << "class,bin_lo,bin_hi,count\n";
  for (const auto& h : histograms) {
    for (std::size_t j = 0; j < h.bins(); ++j) {
      os << static_cast<int>(h.class_id) << ',' << detail::fmt_double(h.bin_lo(j)) << ','
         << detail::fmt_double(h.bin_hi(j)) << ',' << h.counts[j] << '\n';
    }
  }
  return os.str();
}

std::string decile_csv(std::span<const DecileRow> rows) {
  std::ostringstream os;
  os << "class,decile,pixel_count,precision,mean_confidence\n";
  for (const auto& r : rows) {
    os << r.class_id << ',' << r.decile << ',' << r.pixel_count << ','
       << detail::fmt_optional(r.precision) << ',' << detail::fmt_double(r.mean_confidence)
       << '\n';
  }
  return os.str();
}

}  // namespace cssl
