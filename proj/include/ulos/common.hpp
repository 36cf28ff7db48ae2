#pragma once

// Shared infrastructure: error types, RNG, parallel loops, hashing and
// little-endian binary I/O used by every other header.

#include <Eigen/Dense>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ulos {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors

struct UlosError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ULOS_DEFINE_ERROR(Name)                  \
    struct Name : UlosError {                    \
        using UlosError::UlosError;              \
    }

ULOS_DEFINE_ERROR(ConfigError);
ULOS_DEFINE_ERROR(InvalidPrimitive);
ULOS_DEFINE_ERROR(NestingViolation);
ULOS_DEFINE_ERROR(OutOfDomain);
ULOS_DEFINE_ERROR(OnBoundary);
ULOS_DEFINE_ERROR(NotNearSurface);
ULOS_DEFINE_ERROR(NonUnitInput);
ULOS_DEFINE_ERROR(NonPositiveDistance);
ULOS_DEFINE_ERROR(NonFiniteField);
ULOS_DEFINE_ERROR(NonFiniteParams);
ULOS_DEFINE_ERROR(NoIntersection);
ULOS_DEFINE_ERROR(NoSurface);
ULOS_DEFINE_ERROR(NoValidRays);
ULOS_DEFINE_ERROR(GridMismatch);
ULOS_DEFINE_ERROR(GridEmpty);
ULOS_DEFINE_ERROR(FrameMismatch);
ULOS_DEFINE_ERROR(EmptySurface);
ULOS_DEFINE_ERROR(EmptyCloud);
ULOS_DEFINE_ERROR(ShapeMismatch);
ULOS_DEFINE_ERROR(FitDiverged);
ULOS_DEFINE_ERROR(DivergedLoss);
ULOS_DEFINE_ERROR(IoError);

#undef ULOS_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Axis-aligned box

struct Aabb {
    Vec3 lo{Vec3::Zero()};
    Vec3 hi{Vec3::Zero()};

    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 half_extent() const { return 0.5 * (hi - lo); }
    double max_half_extent() const { return half_extent().maxCoeff(); }

    bool contains(const Vec3& p, double pad = 0.0) const {
        return p.x() >= lo.x() - pad && p.x() <= hi.x() + pad &&
               p.y() >= lo.y() - pad && p.y() <= hi.y() + pad &&
               p.z() >= lo.z() - pad && p.z() <= hi.z() + pad;
    }

    // Slab test. Returns false if the ray misses; otherwise [t0,t1] is the
    // parametric overlap (t0 may be negative when the origin is inside).
    bool ray_range(const Vec3& origin, const Vec3& dir, double& t0, double& t1) const {
        t0 = -std::numeric_limits<double>::infinity();
        t1 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            const double o = origin[a], d = dir[a];
            if (std::abs(d) < 1e-300) {
                if (o < lo[a] || o > hi[a]) return false;
                continue;
            }
            double ta = (lo[a] - o) / d;
            double tb = (hi[a] - o) / d;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        return t0 <= t1;
    }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 plus hand-rolled draws so sequences do not
// depend on the standard library's distribution implementations.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    double normal() {  // Box-Muller, cached spare
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * kPi * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    Vec3 uniform_in(const Aabb& box) {
        return Vec3(uniform(box.lo.x(), box.hi.x()),
                    uniform(box.lo.y(), box.hi.y()),
                    uniform(box.lo.z(), box.hi.z()));
    }

    Vec3 unit_vector() {
        // Marsaglia rejection
        for (;;) {
            const double x = uniform(-1.0, 1.0), y = uniform(-1.0, 1.0), z = uniform(-1.0, 1.0);
            const double n2 = x * x + y * y + z * z;
            if (n2 > 1e-12 && n2 <= 1.0) return Vec3(x, y, z) / std::sqrt(n2);
        }
    }

    // Independent child stream (splitmix64 of seed and id).
    Rng fork(std::uint64_t id) const {
        std::uint64_t z = seed_mix_ + 0x9E3779B97F4A7C15ull * (id + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    explicit Rng(std::uint64_t seed, std::uint64_t mix) : eng_(seed), seed_mix_(mix) {}

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::uint64_t seed_mix_{0x8b3f0a4e12c9d7f1ull};
    double spare_{0.0};
    bool has_spare_{false};
};

// ---------------------------------------------------------------------------
// Parallel loop. Contiguous chunks, one per worker, so any reduction done
// per-chunk and combined in chunk order is independent of scheduling.

inline int thread_count() {
    if (const char* env = std::getenv("ULOS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// f(begin, end, chunk_index); chunk_index < n_chunks(n).
template <class F>
void parallel_for(std::int64_t n, F&& f, int max_threads = -1) {
    if (n <= 0) return;
    int nt = max_threads > 0 ? max_threads : thread_count();
    nt = static_cast<int>(std::min<std::int64_t>(nt, n));
    if (nt <= 1) {
        f(std::int64_t{0}, n, 0);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nt));
    const std::int64_t base = n / nt, rem = n % nt;
    std::int64_t begin = 0;
    for (int c = 0; c < nt; ++c) {
        const std::int64_t len = base + (c < rem ? 1 : 0);
        const std::int64_t end = begin + len;
        workers.emplace_back([&f, begin, end, c] { f(begin, end, c); });
        begin = end;
    }
    for (auto& w : workers) w.join();
}

inline int n_chunks(std::int64_t n, int max_threads = -1) {
    if (n <= 0) return 0;
    int nt = max_threads > 0 ? max_threads : thread_count();
    return static_cast<int>(std::min<std::int64_t>(nt, n));
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hash (manifest / config fingerprints; not cryptographic).

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// ---------------------------------------------------------------------------
// Little-endian binary I/O

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <class T>
void write_pod(std::ostream& os, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of file");
    return v;
}

template <class T>
void write_span(std::ostream& os, const T* data, std::size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_span(std::istream& is, T* data, std::size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw IoError("unexpected end of file");
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return v.allFinite();
}

// ---------------------------------------------------------------------------
// Dense 3D scalar grid (heatmaps, imported SDF grids). Values are stored
// x-major: x is the slowest index, z the fastest.

struct ScalarGrid3 {
    Vec3 origin{0, 0, 0};  // center of voxel (0,0,0)
    double pitch = 0.0;    // voxel edge length, m
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> values;

    std::int64_t size() const { return std::int64_t{nx} * ny * nz; }

    std::int64_t index(int ix, int iy, int iz) const {
        return (std::int64_t{ix} * ny + iy) * nz + iz;
    }

    Vec3 center(int ix, int iy, int iz) const {
        return origin + pitch * Vec3(ix, iy, iz);
    }

    Vec3 center(std::int64_t flat) const {
        const int iz = static_cast<int>(flat % nz);
        const int iy = static_cast<int>((flat / nz) % ny);
        const int ix = static_cast<int>(flat / (std::int64_t{ny} * nz));
        return center(ix, iy, iz);
    }

    void allocate() { values.assign(static_cast<std::size_t>(size()), 0.0f); }

    bool same_layout(const ScalarGrid3& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && pitch == o.pitch &&
               (origin - o.origin).norm() < 1e-12;
    }

    // Trilinear interpolation, clamped to the grid.
    double sample(const Vec3& p) const {
        const Vec3 q = (p - origin) / pitch;
        auto clampf = [](double v, int n) { return std::min(std::max(v, 0.0), double(n - 1)); };
        const double fx = clampf(q.x(), nx), fy = clampf(q.y(), ny), fz = clampf(q.z(), nz);
        const int x0 = std::min(static_cast<int>(fx), nx - 2 >= 0 ? nx - 2 : 0);
        const int y0 = std::min(static_cast<int>(fy), ny - 2 >= 0 ? ny - 2 : 0);
        const int z0 = std::min(static_cast<int>(fz), nz - 2 >= 0 ? nz - 2 : 0);
        const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
        auto v = [&](int dx, int dy, int dz) {
            return static_cast<double>(values[static_cast<std::size_t>(
                index(std::min(x0 + dx, nx - 1), std::min(y0 + dy, ny - 1), std::min(z0 + dz, nz - 1)))]);
        };
        const double c00 = v(0, 0, 0) * (1 - tz) + v(0, 0, 1) * tz;
        const double c01 = v(0, 1, 0) * (1 - tz) + v(0, 1, 1) * tz;
        const double c10 = v(1, 0, 0) * (1 - tz) + v(1, 0, 1) * tz;
        const double c11 = v(1, 1, 0) * (1 - tz) + v(1, 1, 1) * tz;
        return ((c00 * (1 - ty) + c01 * ty) * (1 - tx) + (c10 * (1 - ty) + c11 * ty) * tx);
    }
};

}  // namespace ulos
