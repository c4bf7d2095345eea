#include "vip/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vip/errors.hpp"

namespace vip {

namespace {

// Reads one PPM header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
        ++pos;
    }
    if (start == pos) throw FormatError("unexpected end of PPM header", start);
    return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos));
}

std::size_t parse_uint(const std::string& tok, std::size_t at) {
    std::size_t v = 0;
    for (char c : tok) {
        if (c < '0' || c > '9') throw FormatError("malformed number '" + tok + "' in PPM header", at);
        v = v * 10 + static_cast<std::size_t>(c - '0');
        if (v > 1u << 24) throw FormatError("PPM dimension out of range", at);
    }
    return v;
}

std::uint8_t round_half_up(double v) {
    double r = std::floor(v + 0.5);
    if (r < 0.0) r = 0.0;
    if (r > 255.0) r = 255.0;
    return static_cast<std::uint8_t>(r);
}

}  // namespace

RawSnapshot load_ppm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    const std::string magic = next_token(bytes, pos);
    if (magic != "P6") throw FormatError("unsupported PPM variant '" + magic + "' (binary P6 required)", 0);
    std::size_t at = pos;
    const std::size_t w = parse_uint(next_token(bytes, pos), at);
    at = pos;
    const std::size_t h = parse_uint(next_token(bytes, pos), at);
    at = pos;
    const std::string maxval = next_token(bytes, pos);
    if (maxval != "255") throw FormatError("unsupported PPM maxval '" + maxval + "'", at);
    if (w == 0 || h == 0) throw FormatError("PPM dimensions must be positive", at);
    // Exactly one whitespace byte separates the header from the pixel data.
    if (pos >= bytes.size()) throw FormatError("missing pixel data", pos);
    const char sep = static_cast<char>(bytes[pos]);
    if (sep != '\n' && sep != ' ' && sep != '\t' && sep != '\r')
        throw FormatError("missing whitespace after maxval", pos);
    ++pos;
    const std::size_t need = w * h * 3;
    if (bytes.size() - pos < need)
        throw FormatError("truncated pixel data (need " + std::to_string(need) + " bytes, have " +
                              std::to_string(bytes.size() - pos) + ")",
                          pos + (bytes.size() - pos));
    RawSnapshot snap;
    snap.width = w;
    snap.height = h;
    snap.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return snap;
}

std::vector<std::uint8_t> save_ppm(const RawSnapshot& snap) {
    char header[64];
    const int n = std::snprintf(header, sizeof header, "P6\n%zu %zu\n255\n", snap.width, snap.height);
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(n) + snap.pixels.size());
    out.insert(out.end(), header, header + n);
    out.insert(out.end(), snap.pixels.begin(), snap.pixels.end());
    return out;
}

RawSnapshot load_ppm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open snapshot file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_ppm(bytes);
}

void save_ppm_file(const RawSnapshot& snap, const std::string& path) {
    const auto bytes = save_ppm(snap);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write snapshot file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write on snapshot file: " + path);
}

RawSnapshot downsample(const RawSnapshot& raw, std::size_t target_w, std::size_t target_h) {
    if (target_w == 0 || target_h == 0) throw ConfigError("downsample: target must be positive");
    if (target_w > raw.width || target_h > raw.height)
        throw ConfigError("downsample: target exceeds source (no upsampling)");
    if (target_w == raw.width && target_h == raw.height) return raw;

    RawSnapshot out;
    out.width = target_w;
    out.height = target_h;
    out.pixels.resize(target_w * target_h * 3);
    const double sx = static_cast<double>(raw.width) / static_cast<double>(target_w);
    const double sy = static_cast<double>(raw.height) / static_cast<double>(target_h);
    for (std::size_t ty = 0; ty < target_h; ++ty) {
        const double y0 = ty * sy, y1 = (ty + 1) * sy;
        for (std::size_t tx = 0; tx < target_w; ++tx) {
            const double x0 = tx * sx, x1 = (tx + 1) * sx;
            double acc[3] = {0.0, 0.0, 0.0};
            double area = 0.0;
            const std::size_t iy0 = static_cast<std::size_t>(y0);
            const std::size_t iy1 = std::min(raw.height, static_cast<std::size_t>(std::ceil(y1)));
            const std::size_t ix0 = static_cast<std::size_t>(x0);
            const std::size_t ix1 = std::min(raw.width, static_cast<std::size_t>(std::ceil(x1)));
            for (std::size_t y = iy0; y < iy1; ++y) {
                const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                const std::uint8_t* row = &raw.pixels[(y * raw.width + ix0) * 3];
                for (std::size_t x = ix0; x < ix1; ++x) {
                    const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    const double wgt = wx * wy;
                    acc[0] += wgt * row[0];
                    acc[1] += wgt * row[1];
                    acc[2] += wgt * row[2];
                    row += 3;
                    area += wgt;
                }
            }
            std::uint8_t* dst = out.px(tx, ty);
            dst[0] = round_half_up(acc[0] / area);
            dst[1] = round_half_up(acc[1] / area);
            dst[2] = round_half_up(acc[2] / area);
        }
    }
    return out;
}

NormalizedSnapshot normalize(const RawSnapshot& raw) {
    NormalizedSnapshot out;
    out.values = Tensor({3, raw.height, raw.width});
    double sum = 0.0;
    std::uint8_t lo = 255, hi = 0;
    for (std::uint8_t v : raw.pixels) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return out;  // constant image -> zeros
    const double mean = sum / static_cast<double>(raw.pixels.size());
    const double clo = lo - mean, chi = hi - mean;
    const double scale = 2.0 / (chi - clo);
    const std::size_t hw = raw.height * raw.width;
    for (std::size_t y = 0; y < raw.height; ++y) {
        for (std::size_t x = 0; x < raw.width; ++x) {
            const std::uint8_t* p = raw.px(x, y);
            const std::size_t base = y * raw.width + x;
            for (std::size_t c = 0; c < 3; ++c)
                out.values.data[c * hw + base] = (p[c] - mean - clo) * scale - 1.0;
        }
    }
    return out;
}

RawSnapshot overlay_highlights(const RawSnapshot& raw, const std::vector<HighlightRect>& rects,
                               Rgb color) {
    for (const auto& r : rects) {
        if (r.px > r.qx || r.py > r.qy || r.qx >= raw.width || r.qy >= raw.height)
            throw DataError("highlight rect out of bounds: (" + std::to_string(r.px) + "," +
                            std::to_string(r.py) + ")-(" + std::to_string(r.qx) + "," +
                            std::to_string(r.qy) + ")");
    }
    RawSnapshot out = raw;
    for (const auto& r : rects) {
        for (std::size_t y = r.py; y <= r.qy; ++y) {
            std::uint8_t* p = out.px(r.px, y);
            for (std::size_t x = r.px; x <= r.qx; ++x, p += 3) {
                if (luminance(p[0], p[1], p[2]) > kInkLuminanceThreshold) {
                    p[0] = color.r;
                    p[1] = color.g;
                    p[2] = color.b;
                }
            }
        }
    }
    return out;
}

RegionProposalSet segment(const NormalizedSnapshot& img, std::size_t proposal_height) {
    const std::size_t h = img.height(), w = img.width();
    if (proposal_height == 0 || h % proposal_height != 0)
        throw ConfigError("segment: height " + std::to_string(h) +
                          " is not divisible by proposal height " +
                          std::to_string(proposal_height));
    RegionProposalSet set;
    set.proposal_height = proposal_height;
    const std::size_t n = h / proposal_height;
    set.proposals.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        Tensor strip({3, proposal_height, w});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < proposal_height; ++y)
                std::copy_n(&img.values.at(c, p * proposal_height + y, 0), w,
                            &strip.at(c, y, 0));
        set.proposals.push_back(std::move(strip));
    }
    return set;
}

RawSnapshot average_snapshot(const std::vector<RawSnapshot>& snapshots) {
    if (snapshots.empty()) throw DataError("average_snapshot: empty snapshot list");
    const std::size_t w = snapshots.front().width, h = snapshots.front().height;
    for (const auto& s : snapshots)
        if (s.width != w || s.height != h)
            throw DataError("average_snapshot: dimension mismatch");
    std::vector<double> acc(w * h * 3, 0.0);
    for (const auto& s : snapshots)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s.pixels[i];
    RawSnapshot out;
    out.width = w;
    out.height = h;
    out.pixels.resize(acc.size());
    const double n = static_cast<double>(snapshots.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.pixels[i] = round_half_up(acc[i] / n);
    return out;
}

}  // namespace vip
