#include "spr/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "spr/fsio.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

std::uint32_t read_be32(const std::string& buf, std::size_t at) {
    require(at + 4 <= buf.size(), "truncated file");
    auto u = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])); };
    return (u(0) << 24) | (u(1) << 16) | (u(2) << 8) | u(3);
}

void append_be32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>(v & 0xff));
}

void append_le32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_le32(const std::string& buf, std::size_t at) {
    require(at + 4 <= buf.size(), "truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    return v;
}

void append_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64(const std::string& buf, std::size_t at) {
    require(at + 8 <= buf.size(), "truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

// Rectangular +/-1 bar stamped into an 8x8 template.
void stamp_bar(std::vector<double>& img, Rng& rng) {
    int h = 8, w = 8;
    bool horizontal = rng.uniform() < 0.5;
    int thick = 1 + static_cast<int>(rng.uniform_int(2));
    int len = 4 + static_cast<int>(rng.uniform_int(4));
    int r0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - (horizontal ? thick : len) + 1)));
    int c0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - (horizontal ? len : thick) + 1)));
    double amp = rng.uniform() < 0.5 ? 1.0 : -1.0;
    int rh = horizontal ? thick : len;
    int cw = horizontal ? len : thick;
    for (int r = r0; r < r0 + rh; ++r)
        for (int c = c0; c < c0 + cw; ++c) img[static_cast<std::size_t>(r) * w + c] += amp;
}

}  // namespace

void Dataset::validate() const {
    require(!labels.empty(), "empty dataset");
    require(inputs.shape.size() == 2 || inputs.shape.size() == 4,
            "inputs must be (n,d) or (n,C,H,W)");
    require(inputs.shape[0] == static_cast<int>(labels.size()),
            "input/label count mismatch");
    require(classes >= 2, "need at least two classes");
    for (int l : labels) require(l >= 0 && l < classes, "label out of range");
    ensure_finite(inputs, "dataset inputs");
}

SyntheticKind synthetic_kind_from_name(const std::string& name) {
    if (name == "blobs") return SyntheticKind::blobs;
    if (name == "moons") return SyntheticKind::moons;
    if (name == "rings") return SyntheticKind::rings;
    if (name == "tiny-images" || name == "tiny_images") return SyntheticKind::tiny_images;
    throw ConfigError("unknown synthetic dataset kind: " + name);
}

std::string synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::blobs: return "blobs";
        case SyntheticKind::moons: return "moons";
        case SyntheticKind::rings: return "rings";
        case SyntheticKind::tiny_images: return "tiny-images";
    }
    throw Error("unknown synthetic kind");
}

Dataset gen_synthetic(SyntheticKind kind, int n, int classes, double noise,
                      std::uint64_t seed, Split split) {
    if (classes < 2) throw ConfigError("need at least two classes");
    if (n < classes) throw ConfigError("need at least one sample per class");
    if (noise < 0.0) throw ConfigError("noise must be >= 0");
    if (kind == SyntheticKind::moons && classes != 2)
        throw ConfigError("moons is a 2-class dataset");

    Dataset ds;
    ds.classes = classes;
    ds.split = split;
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) ds.labels[i] = i % classes;  // balanced round-robin

    // Sample noise is split-keyed; class structure (below) is seed-only.
    Rng rng(derive_seed(seed, "synthetic", split == Split::train ? 0u : 1u));
    const double two_pi = 6.283185307179586;

    if (kind == SyntheticKind::tiny_images) {
        // Per-class planted patterns: sums of a few +/-1 bars, drawn from a
        // class-keyed stream so every sample of a class shares its template.
        std::vector<std::vector<double>> patterns(classes, std::vector<double>(64, 0.0));
        for (int c = 0; c < classes; ++c) {
            Rng prng(derive_seed(seed, "tiny-patterns", static_cast<std::uint64_t>(c)));
            int bars = 2 + static_cast<int>(prng.uniform_int(2));
            for (int bcount = 0; bcount < bars; ++bcount) stamp_bar(patterns[c], prng);
        }
        std::vector<double> data(static_cast<std::size_t>(n) * 64);
        for (int i = 0; i < n; ++i) {
            const auto& pat = patterns[ds.labels[i]];
            for (int p = 0; p < 64; ++p)
                data[static_cast<std::size_t>(i) * 64 + p] = pat[p] + noise * rng.normal();
        }
        ds.inputs = Tensor({n, 1, 8, 8}, std::move(data));
        ds.validate();
        return ds;
    }

    std::vector<double> data(static_cast<std::size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        int c = ds.labels[i];
        double x = 0.0, y = 0.0;
        switch (kind) {
            case SyntheticKind::blobs: {
                double th = two_pi * c / classes;
                x = 2.5 * std::cos(th) + noise * rng.normal();
                y = 2.5 * std::sin(th) + noise * rng.normal();
                break;
            }
            case SyntheticKind::moons: {
                double t = rng.uniform() * 3.141592653589793;
                if (c == 0) {
                    x = std::cos(t);
                    y = std::sin(t);
                } else {
                    x = 1.0 - std::cos(t);
                    y = 0.5 - std::sin(t);
                }
                x += noise * rng.normal();
                y += noise * rng.normal();
                break;
            }
            case SyntheticKind::rings: {
                double t = rng.uniform() * two_pi;
                double r = 0.8 + 0.8 * c + noise * rng.normal();
                x = r * std::cos(t);
                y = r * std::sin(t);
                break;
            }
            case SyntheticKind::tiny_images: break;  // handled above
        }
        data[static_cast<std::size_t>(i) * 2] = x;
        data[static_cast<std::size_t>(i) * 2 + 1] = y;
    }
    ds.inputs = Tensor({n, 2}, std::move(data));
    ds.validate();
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::string img = read_file(images_path);
    std::string lab = read_file(labels_path);

    require(read_be32(img, 0) == kIdxImagesMagic, "bad magic in image file");
    std::uint32_t n = read_be32(img, 4);
    std::uint32_t h = read_be32(img, 8);
    std::uint32_t w = read_be32(img, 12);
    require(img.size() == 16 + static_cast<std::size_t>(n) * h * w,
            "truncated image payload");

    require(read_be32(lab, 0) == kIdxLabelsMagic, "bad magic in label file");
    std::uint32_t ln = read_be32(lab, 4);
    require(ln == n, "image/label count mismatch");
    require(lab.size() == 8 + static_cast<std::size_t>(ln), "truncated label payload");

    Dataset ds;
    std::vector<double> data(static_cast<std::size_t>(n) * h * w);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
    ds.inputs = Tensor({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)},
                       std::move(data));
    ds.labels.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.classes = max_label + 1 < 2 ? 2 : max_label + 1;
    ds.validate();
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    ds.validate();
    require(ds.inputs.shape.size() == 4 && ds.inputs.shape[1] == 1,
            "IDX holds single-channel images");
    int n = ds.inputs.shape[0], h = ds.inputs.shape[2], w = ds.inputs.shape[3];

    std::string img;
    append_be32(img, kIdxImagesMagic);
    append_be32(img, static_cast<std::uint32_t>(n));
    append_be32(img, static_cast<std::uint32_t>(h));
    append_be32(img, static_cast<std::uint32_t>(w));
    for (double v : ds.inputs.data) {
        double scaled = std::clamp(std::round(v * 255.0), 0.0, 255.0);
        img.push_back(static_cast<char>(static_cast<unsigned char>(scaled)));
    }

    std::string lab;
    append_be32(lab, kIdxLabelsMagic);
    append_be32(lab, static_cast<std::uint32_t>(n));
    for (int l : ds.labels) {
        require(l >= 0 && l <= 255, "IDX labels must fit a byte");
        lab.push_back(static_cast<char>(static_cast<unsigned char>(l)));
    }

    atomic_write_file(images_path, img);
    atomic_write_file(labels_path, lab);
}

NormStats compute_stats(const Dataset& ds) {
    ds.validate();
    NormStats st;
    if (ds.inputs.shape.size() == 2) {
        int n = ds.inputs.shape[0], d = ds.inputs.shape[1];
        st.mean.assign(d, 0.0);
        st.stddev.assign(d, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) st.mean[j] += ds.inputs.at2(i, j);
        for (double& m : st.mean) m /= n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                double dlt = ds.inputs.at2(i, j) - st.mean[j];
                st.stddev[j] += dlt * dlt;
            }
        for (double& s : st.stddev) s = std::max(std::sqrt(s / n), 1e-8);
    } else {
        int n = ds.inputs.shape[0], c = ds.inputs.shape[1];
        int hw = ds.inputs.shape[2] * ds.inputs.shape[3];
        st.mean.assign(c, 0.0);
        st.stddev.assign(c, 0.0);
        double cnt = static_cast<double>(n) * hw;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* base =
                    ds.inputs.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
                for (int p = 0; p < hw; ++p) st.mean[ch] += base[p];
            }
        for (double& m : st.mean) m /= cnt;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* base =
                    ds.inputs.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
                for (int p = 0; p < hw; ++p) {
                    double dlt = base[p] - st.mean[ch];
                    st.stddev[ch] += dlt * dlt;
                }
            }
        for (double& s : st.stddev) s = std::max(std::sqrt(s / cnt), 1e-8);
    }
    return st;
}

Dataset apply_stats(const Dataset& ds, const NormStats& stats) {
    ds.validate();
    Dataset out = ds;
    if (ds.inputs.shape.size() == 2) {
        int n = ds.inputs.shape[0], d = ds.inputs.shape[1];
        require(static_cast<int>(stats.mean.size()) == d, "stats dimension mismatch");
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                out.inputs.data[static_cast<std::size_t>(i) * d + j] =
                    (ds.inputs.at2(i, j) - stats.mean[j]) / stats.stddev[j];
    } else {
        int n = ds.inputs.shape[0], c = ds.inputs.shape[1];
        int hw = ds.inputs.shape[2] * ds.inputs.shape[3];
        require(static_cast<int>(stats.mean.size()) == c, "stats channel mismatch");
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                double* base =
                    out.inputs.data.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
                for (int p = 0; p < hw; ++p)
                    base[p] = (base[p] - stats.mean[ch]) / stats.stddev[ch];
            }
    }
    out.normalized = true;
    out.stats = stats;
    return out;
}

Dataset normalize(const Dataset& ds, NormStats* out_stats) {
    NormStats st = compute_stats(ds);
    if (out_stats) *out_stats = st;
    return apply_stats(ds, st);
}

Tensor flip_horizontal(const Tensor& batch) {
    require(batch.shape.size() == 4, "flip needs (n,C,H,W) input");
    Tensor out = batch;
    int n = batch.shape[0], c = batch.shape[1], h = batch.shape[2], w = batch.shape[3];
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col)
                    out.data[batch.idx4(i, ch, r, col)] =
                        batch.data[batch.idx4(i, ch, r, w - 1 - col)];
    return out;
}

Tensor augment(const Tensor& batch, AugmentPolicy policy, int pad, std::uint64_t seed,
               std::uint64_t epoch, std::uint64_t batch_index) {
    if (policy == AugmentPolicy::none) return batch;
    require(batch.shape.size() == 4, "augment needs (n,C,H,W) input");
    int n = batch.shape[0], c = batch.shape[1], h = batch.shape[2], w = batch.shape[3];
    require(pad >= 0 && pad < h && pad < w, "pad must be smaller than the image");

    Rng rng(derive_seed(derive_seed(seed, "augment", epoch), "batch", batch_index));
    Tensor out(batch.shape, std::vector<double>(batch.data.size(), 0.0));
    for (int i = 0; i < n; ++i) {
        // Crop offsets into the zero-padded image, then an optional flip.
        int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * pad + 1)));
        int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * pad + 1)));
        bool flip = rng.uniform() < 0.5;
        for (int ch = 0; ch < c; ++ch)
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col) {
                    int sr = r + dy - pad;
                    int sc = col + dx - pad;
                    double v = (sr >= 0 && sr < h && sc >= 0 && sc < w)
                                   ? batch.data[batch.idx4(i, ch, sr, sc)]
                                   : 0.0;
                    int dcol = flip ? w - 1 - col : col;
                    out.data[out.idx4(i, ch, r, dcol)] = v;
                }
    }
    return out;
}

void save_sprd(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::string buf = "SPRD";
    append_le32(buf, 1u);  // version
    append_le32(buf, static_cast<std::uint32_t>(ds.inputs.shape.size()));
    for (int d : ds.inputs.shape) append_le32(buf, static_cast<std::uint32_t>(d));
    append_le32(buf, static_cast<std::uint32_t>(ds.labels.size()));
    append_le32(buf, static_cast<std::uint32_t>(ds.classes));
    for (double v : ds.inputs.data) append_f64(buf, v);
    for (int l : ds.labels) append_le32(buf, static_cast<std::uint32_t>(l));
    atomic_write_file(path, buf);
}

Dataset load_sprd(const std::string& path) {
    std::string buf = read_file(path);
    require(buf.size() >= 4 && buf.compare(0, 4, "SPRD") == 0, "bad magic in dataset file");
    require(read_le32(buf, 4) == 1u, "unsupported dataset file version");
    std::uint32_t ndim = read_le32(buf, 8);
    require(ndim == 2 || ndim == 4, "dataset rank must be 2 or 4");
    std::vector<int> shape(ndim);
    std::size_t at = 12;
    for (std::uint32_t i = 0; i < ndim; ++i, at += 4)
        shape[i] = static_cast<int>(read_le32(buf, at));
    std::uint32_t count = read_le32(buf, at);
    at += 4;
    std::uint32_t classes = read_le32(buf, at);
    at += 4;
    require(static_cast<int>(count) == shape[0], "count/shape mismatch");

    std::size_t numel = 1;
    for (int d : shape) numel *= static_cast<std::size_t>(d);
    require(buf.size() == at + numel * 8 + count * 4, "truncated dataset payload");

    Dataset ds;
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i, at += 8) data[i] = read_f64(buf, at);
    ds.inputs = Tensor(shape, std::move(data));
    ds.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i, at += 4)
        ds.labels[i] = static_cast<int>(read_le32(buf, at));
    ds.classes = static_cast<int>(classes);
    ds.validate();
    return ds;
}

}  // namespace spr
