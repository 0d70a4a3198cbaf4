#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace parafact {

// Uniform-grid table of float64 samples with cubic (Catmull-Rom)
// interpolation. Serialized little-endian as:
//   bytes 0..3   magic "PFTB"
//   bytes 4..7   version (u32, currently 1)
//   bytes 8..15  lo (f64)
//   bytes 16..23 hi (f64)
//   bytes 24..31 count (u64)
//   then count f64 values
struct Table1D {
    double lo = 0.0, hi = 1.0;
    std::vector<double> values;

    static constexpr std::uint32_t kVersion = 1;

    template <class Fn>
    static Table1D tabulate(Fn f, double lo, double hi, int count) {
        if (count < 4) throw std::invalid_argument("table needs at least 4 nodes");
        Table1D t;
        t.lo = lo;
        t.hi = hi;
        t.values.resize(count);
        for (int i = 0; i < count; ++i)
            t.values[i] = f(lo + (hi - lo) * i / (count - 1));
        return t;
    }

    double step() const { return (hi - lo) / (values.size() - 1); }

    double operator()(double x) const {
        const int n = static_cast<int>(values.size());
        double s = (x - lo) / step();
        int i = static_cast<int>(std::floor(s));
        i = std::max(1, std::min(i, n - 3));
        double f = s - i;
        double p0 = values[i - 1], p1 = values[i], p2 = values[i + 1], p3 = values[i + 2];
        return p1 + 0.5 * f * (p2 - p0 + f * (2 * p0 - 5 * p1 + 4 * p2 - p3 +
                                              f * (3 * (p1 - p2) + p3 - p0)));
    }

    // interpolation error estimate against midpoints of a twice-finer grid
    template <class Fn>
    double error_estimate(Fn f) const {
        double err = 0.0;
        const int n = static_cast<int>(values.size());
        for (int i = 1; i + 2 < n; ++i) {
            double x = lo + step() * (i + 0.5);
            err = std::max(err, std::fabs((*this)(x)-f(x)));
        }
        return err;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path);
        out.write("PFTB", 4);
        auto put = [&](const void* p, size_t k) { out.write(static_cast<const char*>(p), k); };
        std::uint32_t ver = kVersion;
        std::uint64_t cnt = values.size();
        put(&ver, 4);
        put(&lo, 8);
        put(&hi, 8);
        put(&cnt, 8);
        put(values.data(), 8 * values.size());
    }

    static Table1D load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "PFTB", 4) != 0)
            throw std::runtime_error(path + ": not a table file");
        std::uint32_t ver = 0;
        Table1D t;
        std::uint64_t cnt = 0;
        in.read(reinterpret_cast<char*>(&ver), 4);
        if (ver != kVersion) throw std::runtime_error(path + ": unsupported table version");
        in.read(reinterpret_cast<char*>(&t.lo), 8);
        in.read(reinterpret_cast<char*>(&t.hi), 8);
        in.read(reinterpret_cast<char*>(&cnt), 8);
        if (!in || cnt < 4 || cnt > (1u << 26)) throw std::runtime_error(path + ": bad table header");
        t.values.resize(cnt);
        in.read(reinterpret_cast<char*>(t.values.data()), 8 * cnt);
        if (!in) throw std::runtime_error(path + ": truncated table payload");
        return t;
    }
};

}  // namespace parafact
