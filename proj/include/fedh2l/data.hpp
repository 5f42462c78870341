// Datasets and domain construction: labeled sets, image rotation, the
// synthetic rotated-cluster generator, per-domain partitioning, epoch
// samplers, and the shared public store.
//
// A "domain" is one node's data distribution. Rotated variants of a common
// source (images rotated by a per-domain angle, or cluster means rotated on
// the unit circle) give a controlled amount of distribution shift.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace fedh2l {

struct LabeledSet {
    Matrix x;                        // n x d features in [0, 1]
    std::vector<int> y;              // labels in [0, classes)
    std::vector<std::uint64_t> ids;  // globally unique sample ids
    int classes = 0;
    int img_h = 0, img_w = 0;        // set when rows are flattened images

    std::size_t size() const { return x.rows; }

    LabeledSet select(const std::vector<std::size_t>& rows) const {
        LabeledSet out;
        out.x = Matrix(rows.size(), x.cols);
        out.y.reserve(rows.size());
        out.ids.reserve(rows.size());
        out.classes = classes;
        out.img_h = img_h;
        out.img_w = img_w;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t r = rows[i];
            if (r >= size()) throw std::out_of_range("LabeledSet::select: row out of range");
            std::copy(x.row(r), x.row(r) + x.cols, out.x.row(i));
            out.y.push_back(y[r]);
            out.ids.push_back(ids[r]);
        }
        return out;
    }
};

struct Batch {
    Matrix x;
    std::vector<int> y;
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return x.rows; }
};

inline Batch gather(const LabeledSet& set, const std::vector<std::size_t>& rows) {
    LabeledSet s = set.select(rows);
    return Batch{std::move(s.x), std::move(s.y), std::move(s.ids)};
}

inline LabeledSet concat(const std::vector<const LabeledSet*>& parts) {
    LabeledSet out;
    if (parts.empty()) return out;
    std::size_t n = 0;
    for (const LabeledSet* p : parts) {
        n += p->size();
        if (p->x.cols != parts[0]->x.cols)
            throw std::invalid_argument("concat: feature width mismatch");
    }
    out.x = Matrix(n, parts[0]->x.cols);
    out.y.reserve(n);
    out.ids.reserve(n);
    out.classes = parts[0]->classes;
    out.img_h = parts[0]->img_h;
    out.img_w = parts[0]->img_w;
    std::size_t at = 0;
    for (const LabeledSet* p : parts) {
        std::copy(p->x.data.begin(), p->x.data.end(), out.x.row(at));
        out.y.insert(out.y.end(), p->y.begin(), p->y.end());
        out.ids.insert(out.ids.end(), p->ids.begin(), p->ids.end());
        at += p->size();
        out.classes = std::max(out.classes, p->classes);
    }
    return out;
}

// Clockwise rotation about the image center, bilinear interpolation, zero
// fill outside the source. Coordinates are y-down, so the inverse map of a
// clockwise rotation by theta is:
//   src_x = cx + cos(t) dx + sin(t) dy
//   src_y = cy - sin(t) dx + cos(t) dy
inline Matrix rotate_image(const Matrix& img, double degrees) {
    const std::size_t h = img.rows, w = img.cols;
    if (h == 0 || w == 0) throw std::invalid_argument("rotate_image: empty image");
    const double t = degrees * std::numbers::pi / 180.0;
    const double ct = std::cos(t), st = std::sin(t);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    Matrix out(h, w, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
        const double dy = static_cast<double>(r) - cy;
        for (std::size_t c = 0; c < w; ++c) {
            const double dx = static_cast<double>(c) - cx;
            const double sx = cx + ct * dx + st * dy;
            const double sy = cy - st * dx + ct * dy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double ax = sx - fx, ay = sy - fy;
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            auto at = [&](long yy, long xx) -> double {
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
                    return 0.0;
                return img(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            };
            out(r, c) = (1.0 - ay) * ((1.0 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                        ay * ((1.0 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
        }
    }
    return out;
}

inline std::uint64_t make_sample_id(std::size_t domain, std::uint64_t local) {
    return (static_cast<std::uint64_t>(domain) << 32) | local;
}

// Rotated-image domains: one seeded subset of the base set (per_class
// samples of each class), rotated by each angle in turn.
// Every domain holds the same underlying samples, so the only cross-domain
// difference is the rotation itself.
inline std::vector<LabeledSet> make_rotated_domains(const LabeledSet& base,
                                                    const std::vector<double>& angles_deg,
                                                    std::size_t per_class, RngStream& rng) {
    if (angles_deg.empty()) throw std::invalid_argument("make_rotated_domains: no angles");
    if (base.img_h <= 0 || base.img_w <= 0)
        throw std::invalid_argument("make_rotated_domains: base set has no image shape");
    if (per_class == 0) throw std::invalid_argument("make_rotated_domains: per_class is zero");

    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> picked;
    std::vector<std::size_t> have(static_cast<std::size_t>(base.classes), 0);
    for (std::size_t r : order) {
        const int cls = base.y[r];
        if (have[static_cast<std::size_t>(cls)] < per_class) {
            ++have[static_cast<std::size_t>(cls)];
            picked.push_back(r);
        }
    }
    for (std::size_t c = 0; c < have.size(); ++c)
        if (have[c] < per_class)
            throw std::runtime_error("make_rotated_domains: class " + std::to_string(c) +
                                     " has only " + std::to_string(have[c]) + " samples, need " +
                                     std::to_string(per_class));
    std::sort(picked.begin(), picked.end());
    const LabeledSet subset = base.select(picked);

    std::vector<LabeledSet> out;
    const std::size_t h = static_cast<std::size_t>(subset.img_h);
    const std::size_t w = static_cast<std::size_t>(subset.img_w);
    for (std::size_t k = 0; k < angles_deg.size(); ++k) {
        LabeledSet dom = subset;
        for (std::size_t i = 0; i < dom.size(); ++i) {
            Matrix img(h, w);
            std::copy(dom.x.row(i), dom.x.row(i) + h * w, img.data.begin());
            const Matrix rot = rotate_image(img, angles_deg[k]);
            std::copy(rot.data.begin(), rot.data.end(), dom.x.row(i));
            dom.ids[i] = make_sample_id(k, subset.ids[i]);
        }
        out.push_back(std::move(dom));
    }
    return out;
}

// Synthetic rotated-cluster domains in 2-D. Class c of domain k is an
// isotropic Gaussian centered on the unit circle at angle
// 2 pi c / classes + k * rotation_step. Points are mapped into [0,1]^2 by
// u = 0.5 + s * p with s = 0.5 / (1 + 5 sd), then clamped; with sd = 0 every
// sample sits exactly on its mapped mean. Labels are assigned round-robin.
inline std::vector<LabeledSet> make_synthetic_domains(std::size_t n_domains, int classes,
                                                      std::size_t n_per_domain,
                                                      double rotation_step_deg, double noise_sd,
                                                      RngStream& rng) {
    if (n_domains == 0) throw std::invalid_argument("make_synthetic_domains: no domains");
    if (classes < 2) throw std::invalid_argument("make_synthetic_domains: need >= 2 classes");
    if (n_per_domain < static_cast<std::size_t>(classes))
        throw std::invalid_argument("make_synthetic_domains: fewer samples than classes");
    if (noise_sd < 0.0) throw std::invalid_argument("make_synthetic_domains: negative noise");

    const double scale = 0.5 / (1.0 + 5.0 * noise_sd);
    std::vector<LabeledSet> out;
    for (std::size_t k = 0; k < n_domains; ++k) {
        const double rot = static_cast<double>(k) * rotation_step_deg * std::numbers::pi / 180.0;
        LabeledSet dom;
        dom.x = Matrix(n_per_domain, 2);
        dom.y.resize(n_per_domain);
        dom.ids.resize(n_per_domain);
        dom.classes = classes;
        for (std::size_t i = 0; i < n_per_domain; ++i) {
            const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
            const double ang =
                2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes) +
                rot;
            const double px = std::cos(ang) + noise_sd * rng.normal();
            const double py = std::sin(ang) + noise_sd * rng.normal();
            dom.x(i, 0) = std::clamp(0.5 + scale * px, 0.0, 1.0);
            dom.x(i, 1) = std::clamp(0.5 + scale * py, 0.0, 1.0);
            dom.y[i] = c;
            dom.ids[i] = make_sample_id(k, i);
        }
        out.push_back(std::move(dom));
    }
    return out;
}

// One node's partitioned domain. Only `pub` ever leaves the node.
struct DomainDataset {
    int domain_id = 0;
    double rotation_deg = 0.0;
    LabeledSet pri, pub, val, test;
};

// Seeded shuffle, then contiguous slices in the order [pri | pub | val |
// test]. alpha, val_frac, and test_frac are fractions of the full set;
// private data is the remainder.
inline DomainDataset split_domain(const LabeledSet& all, int domain_id, double rotation_deg,
                                  double alpha, double val_frac, double test_frac,
                                  RngStream& rng) {
    const std::size_t n = all.size();
    if (n == 0) throw std::invalid_argument("split_domain: empty set");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("split_domain: alpha must be in (0, 1)");
    if (val_frac <= 0.0 || test_frac <= 0.0 || alpha + val_frac + test_frac >= 1.0)
        throw std::invalid_argument("split_domain: fractions leave no private data");

    const auto n_pub = static_cast<std::size_t>(std::lround(alpha * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::lround(test_frac * static_cast<double>(n)));
    if (n_pub == 0 || n_val == 0 || n_test == 0 || n_pub + n_val + n_test >= n)
        throw std::invalid_argument("split_domain: a partition rounded to zero");
    const std::size_t n_pri = n - n_pub - n_val - n_test;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    auto slice = [&](std::size_t from, std::size_t count) {
        return all.select({order.begin() + static_cast<std::ptrdiff_t>(from),
                           order.begin() + static_cast<std::ptrdiff_t>(from + count)});
    };
    DomainDataset d;
    d.domain_id = domain_id;
    d.rotation_deg = rotation_deg;
    d.pri = slice(0, n_pri);
    d.pub = slice(n_pri, n_pub);
    d.val = slice(n_pri + n_pub, n_val);
    d.test = slice(n_pri + n_pub + n_val, n_test);
    return d;
}

// FNV-1a over every partition's ids, in domain order. Two runs that built
// their splits from the same data stream produce the same fingerprint, which
// is what makes cross-method comparisons fair.
inline std::uint64_t split_fingerprint(const std::vector<DomainDataset>& domains) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (const DomainDataset& d : domains) {
        mix(static_cast<std::uint64_t>(d.domain_id));
        for (const LabeledSet* p : {&d.pri, &d.pub, &d.val, &d.test}) {
            mix(p->size());
            for (std::uint64_t id : p->ids) mix(id);
        }
    }
    return h;
}

// Streams batch indices over [0, n): each pass hands out every index exactly
// once in a freshly shuffled order, and batches may straddle pass
// boundaries. Requests of batch >= n return the identity order and leave the
// stream untouched.
class EpochSampler {
public:
    EpochSampler(std::size_t n, RngStream rng) : n_(n), rng_(std::move(rng)) {
        if (n == 0) throw std::invalid_argument("EpochSampler: empty set");
    }

    std::vector<std::size_t> next(std::size_t batch) {
        if (batch == 0) throw std::invalid_argument("EpochSampler::next: empty batch");
        std::vector<std::size_t> out;
        if (batch >= n_) {
            out.resize(n_);
            std::iota(out.begin(), out.end(), 0);
            return out;
        }
        out.reserve(batch);
        while (out.size() < batch) {
            if (cursor_ >= perm_.size()) {
                perm_.resize(n_);
                std::iota(perm_.begin(), perm_.end(), 0);
                rng_.shuffle(perm_);
                cursor_ = 0;
            }
            out.push_back(perm_[cursor_++]);
        }
        return out;
    }

    std::size_t set_size() const { return n_; }

private:
    std::size_t n_;
    RngStream rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_ = 0;
};

inline Batch sample_batch(const LabeledSet& set, std::size_t batch, EpochSampler& sampler) {
    if (sampler.set_size() != set.size())
        throw std::invalid_argument("sample_batch: sampler built for a different set");
    return gather(set, sampler.next(batch));
}

// The shared public plane. Holds a copy of every domain's public partition;
// receivers resolve teaching-signal ids against it. Nothing private is ever
// added here, and lookups of unknown ids are errors rather than guesses.
class PublicStore {
public:
    void add(int domain, const LabeledSet& pub) {
        if (parts_.count(domain)) throw std::invalid_argument("PublicStore: duplicate domain");
        auto& index = index_[domain];
        for (std::size_t i = 0; i < pub.size(); ++i) {
            if (!index.emplace(pub.ids[i], i).second)
                throw std::invalid_argument("PublicStore: duplicate sample id in domain " +
                                            std::to_string(domain));
        }
        parts_.emplace(domain, pub);
    }

    const LabeledSet& partition(int domain) const {
        auto it = parts_.find(domain);
        if (it == parts_.end())
            throw std::out_of_range("PublicStore: unknown domain " + std::to_string(domain));
        return it->second;
    }

    Batch lookup(int domain, const std::vector<std::uint64_t>& ids) const {
        const LabeledSet& part = partition(domain);
        const auto& index = index_.at(domain);
        std::vector<std::size_t> rows;
        rows.reserve(ids.size());
        for (std::uint64_t id : ids) {
            auto it = index.find(id);
            if (it == index.end())
                throw std::out_of_range("PublicStore: id " + std::to_string(id) +
                                        " not in domain " + std::to_string(domain));
            rows.push_back(it->second);
        }
        return gather(part, rows);
    }

    std::vector<int> domains() const {
        std::vector<int> out;
        out.reserve(parts_.size());
        for (const auto& [d, _] : parts_) out.push_back(d);
        return out;
    }

private:
    std::map<int, LabeledSet> parts_;
    std::map<int, std::unordered_map<std::uint64_t, std::size_t>> index_;
};

}  // namespace fedh2l
