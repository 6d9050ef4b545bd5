#include "fdnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fdnet/errors.hpp"
#include "json.hpp"

namespace fdnet {

namespace fs = std::filesystem;

void validate_sequence(const Sequence& seq) {
    const auto& f = seq.frames;
    if (f.rank() != 4 || f.dim(1) != 1)
        throw ShapeError("sequence " + seq.id + ": frames must be [T,1,H,W], got " + shape_str(f.shape()));
    if (f.dim(0) < 2) throw ShapeError("sequence " + seq.id + ": needs at least 2 frames");
    for (double v : f.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ShapeError("sequence " + seq.id + ": value outside [0,1]");
}

// ---------------------------------------------------------------------------
// Synthetic blobs

void Blob::validate() const {
    if (!(ry > 0.0) || !(rx > 0.0)) throw ConfigError("blob radii must be positive");
    if (!(amplitude > 0.0 && amplitude <= 1.0)) throw ConfigError("blob amplitude must lie in (0,1]");
    if (birth < 0) throw ConfigError("blob birth must be >= 0");
}

void splat_blob(const Blob& b, int t, std::int64_t height, std::int64_t width, double* plane) {
    const int age = t - b.birth;
    if (age < 0) return;
    const double scale = 1.0 + age * b.growth;
    if (!(scale > 0.0)) throw ConfigError("blob radii collapse at frame " + std::to_string(t));
    const double cy = b.cy + age * b.vy, cx = b.cx + age * b.vx;
    const double ry = b.ry * scale, rx = b.rx * scale;
    const double theta = b.angle + age * b.rotation;
    const double c = std::cos(theta), s = std::sin(theta);
    const double amp = b.amplitude * std::exp(-age * b.decay);
    for (std::int64_t i = 0; i < height; ++i) {
        const double dy = static_cast<double>(i) - cy;
        for (std::int64_t j = 0; j < width; ++j) {
            const double dx = static_cast<double>(j) - cx;
            const double u = c * dx + s * dy, w = -s * dx + c * dy;
            plane[i * width + j] += amp * std::exp(-0.5 * (u * u / (rx * rx) + w * w / (ry * ry)));
        }
    }
}

Tensor render_blobs(const std::vector<Blob>& blobs, int t, std::int64_t height, std::int64_t width) {
    Tensor out({1, height, width});
    for (const auto& b : blobs) splat_blob(b, t, height, width, out.data().data());
    for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

namespace {

void check_range(const Range& r, const char* name, double min_lo, bool strict) {
    const std::string field = std::string("synth.") + name;
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) throw ConfigError(field + ": must be finite");
    if (r.lo > r.hi) throw ConfigError(field + ": lo exceeds hi");
    if (strict ? !(r.lo > min_lo) : !(r.lo >= min_lo))
        throw ConfigError(field + ": must be " + (strict ? "> " : ">= ") + std::to_string(min_lo));
}

double draw(const Range& r, std::mt19937_64& rng) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

}  // namespace

void SynthConfig::validate() const {
    if (num_sequences < 1) throw ConfigError("synth.num_sequences: must be >= 1");
    if (length < 2) throw ConfigError("synth.length: must be >= 2");
    if (height < 4 || width < 4) throw ConfigError("synth.height/width: must be >= 4");
    if (min_blobs < 1 || max_blobs < min_blobs) throw ConfigError("synth.min_blobs/max_blobs: need 1 <= min <= max");
    check_range(speed, "speed", 0.0, false);
    check_range(amplitude, "amplitude", 0.0, true);
    if (amplitude.hi > 1.0) throw ConfigError("synth.amplitude: must be <= 1");
    check_range(radius, "radius", 0.0, true);
    check_range(aspect, "aspect", 0.0, true);
    check_range(growth, "growth", -1.0 / length, true);
    check_range(rotation, "rotation", -1e9, false);
    check_range(decay, "decay", 0.0, false);
    if (max_birth < 0 || max_birth >= length) throw ConfigError("synth.max_birth: must lie in [0, length)");
    if (!(margin >= 0.0 && margin < 0.5)) throw ConfigError("synth.margin: must lie in [0, 0.5)");
    if (id_prefix.empty()) throw ConfigError("synth.id_prefix: must not be empty");
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<Blob> sample_blobs(const SynthConfig& cfg, std::mt19937_64& rng) {
    constexpr double kPi = 3.14159265358979323846;
    const int span = cfg.max_blobs - cfg.min_blobs + 1;
    const int count = cfg.min_blobs + static_cast<int>(uniform01(rng) * span);
    std::vector<Blob> blobs;
    for (int k = 0; k < count; ++k) {
        Blob b;
        b.cy = cfg.height * (cfg.margin + (1.0 - 2.0 * cfg.margin) * uniform01(rng));
        b.cx = cfg.width * (cfg.margin + (1.0 - 2.0 * cfg.margin) * uniform01(rng));
        const double speed = draw(cfg.speed, rng), heading = 2.0 * kPi * uniform01(rng);
        b.vy = speed * std::sin(heading);
        b.vx = speed * std::cos(heading);
        b.amplitude = draw(cfg.amplitude, rng);
        b.ry = draw(cfg.radius, rng);
        b.rx = b.ry * draw(cfg.aspect, rng);
        b.growth = draw(cfg.growth, rng);
        b.angle = kPi * uniform01(rng);
        b.rotation = draw(cfg.rotation, rng);
        b.decay = draw(cfg.decay, rng);
        b.birth = static_cast<int>(uniform01(rng) * (cfg.max_birth + 1));
        blobs.push_back(b);
    }
    return blobs;
}

std::vector<Sequence> gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<Sequence> out;
    out.reserve(static_cast<std::size_t>(cfg.num_sequences));
    const std::int64_t plane = static_cast<std::int64_t>(cfg.height) * cfg.width;
    for (int s = 0; s < cfg.num_sequences; ++s) {
        const auto blobs = sample_blobs(cfg, rng);
        Sequence seq;
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04d", cfg.id_prefix.c_str(), s);
        seq.id = id;
        seq.frames = Tensor({cfg.length, 1, cfg.height, cfg.width});
        for (int t = 0; t < cfg.length; ++t) {
            double* p = seq.frames.data().data() + t * plane;
            for (const auto& b : blobs) splat_blob(b, t, cfg.height, cfg.width, p);
            for (std::int64_t i = 0; i < plane; ++i) p[i] = std::clamp(p[i], 0.0, 1.0);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
    return v;
}

std::pair<std::int64_t, std::int64_t> image_dims(const Tensor& image) {
    if (image.rank() == 2) return {image.dim(0), image.dim(1)};
    if (image.rank() == 3 && image.dim(0) == 1) return {image.dim(1), image.dim(2)};
    throw ShapeError("image must be [H,W] or [1,H,W], got " + shape_str(image.shape()));
}

std::string frame_name(std::int64_t t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03lld.pgm", static_cast<long long>(t));
    return buf;
}

constexpr const char* kGrdName = "frames.grd";

}  // namespace

void write_pgm(const fs::path& path, const Tensor& image) {
    const auto [h, w] = image_dims(image);
    std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (double v : image.data()) {
        const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    write_file(path, bytes);
}

Tensor read_pgm(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto bad = [&](const std::string& why) { return IoError(path.string() + ": " + why); };
    auto next_token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw bad("truncated header");
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P5") throw bad("not a binary PGM (P5)");
    long long w = 0, h = 0, maxval = 0;
    try {
        w = std::stoll(next_token());
        h = std::stoll(next_token());
        maxval = std::stoll(next_token());
    } catch (const std::logic_error&) {
        throw bad("malformed header");
    }
    if (w <= 0 || h <= 0) throw bad("non-positive dimensions");
    if (maxval <= 0 || maxval > 255) throw bad("only 8-bit PGM is supported");
    ++pos;  // single whitespace before the raster
    const auto n = static_cast<std::size_t>(w * h);
    if (bytes.size() < pos + n) throw bad("truncated raster");
    Tensor out({h, w});
    auto d = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = static_cast<unsigned char>(bytes[pos + i]);
        if (p > maxval) throw bad("pixel exceeds maxval");
        d[i] = static_cast<double>(p) / 255.0;
    }
    return out;
}

void write_grd(const fs::path& path, const Tensor& frames) {
    if (frames.rank() != 4 || frames.dim(1) != 1)
        throw ShapeError("write_grd: frames must be [T,1,H,W], got " + shape_str(frames.shape()));
    std::string bytes = "FDG1";
    put_u32(bytes, static_cast<std::uint32_t>(frames.dim(2)));
    put_u32(bytes, static_cast<std::uint32_t>(frames.dim(3)));
    put_u32(bytes, static_cast<std::uint32_t>(frames.dim(0)));
    for (double v : frames.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    write_file(path, bytes);
}

Tensor read_grd(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 16 || bytes.compare(0, 4, "FDG1") != 0) throw IoError(path.string() + ": not an FDG1 grid");
    const std::int64_t h = get_u32(bytes, 4), w = get_u32(bytes, 8), t = get_u32(bytes, 12);
    const auto n = static_cast<std::size_t>(h * w * t);
    if (bytes.size() != 16 + 4 * n) throw IoError(path.string() + ": payload size does not match header");
    Tensor out({t, 1, h, w});
    auto d = out.data();
    for (std::size_t i = 0; i < n; ++i) d[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
    return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& root) {
    const fs::path path = root / "manifest.json";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    std::vector<ManifestEntry> out;
    try {
        for (const auto& e : j.at("sequences")) {
            ManifestEntry m;
            m.id = e.at("id").get<std::string>();
            m.split = e.at("split").get<std::string>();
            m.num_frames = e.at("num_frames").get<std::int64_t>();
            m.cadence_minutes = e.value("cadence_minutes", 6);
            if (m.id.empty() || m.num_frames < 2 || m.cadence_minutes < 1)
                throw IoError(path.string() + ": invalid entry for '" + m.id + "'");
            out.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return out;
}

void write_manifest(const fs::path& root, const std::vector<ManifestEntry>& entries) {
    nlohmann::json seqs = nlohmann::json::array();
    for (const auto& e : entries)
        seqs.push_back({{"id", e.id}, {"split", e.split}, {"num_frames", e.num_frames},
                        {"cadence_minutes", e.cadence_minutes}});
    nlohmann::json j = {{"version", 1}, {"sequences", seqs}};
    write_file(root / "manifest.json", j.dump(2) + "\n");
}

void write_sequence(const fs::path& root, const std::string& split, const Sequence& seq, FrameFormat format) {
    validate_sequence(seq);
    const fs::path dir = root / split / seq.id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    if (format == FrameFormat::kGrd) {
        write_grd(dir / kGrdName, seq.frames);
        return;
    }
    for (std::int64_t t = 0; t < seq.length(); ++t) write_pgm(dir / frame_name(t), seq.frame(t));
}

Sequence load_sequence(const fs::path& dir, const ManifestEntry& entry) {
    const std::string who = "sequence " + entry.id;
    if (!fs::is_directory(dir)) throw IoError(who + ": directory " + dir.string() + " not found");
    bool has_pgm = false, has_grd = false;
    std::int64_t pgm_files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (ext == ".pgm") {
            has_pgm = true;
            ++pgm_files;
        }
        if (ext == ".grd") has_grd = true;
    }
    if (has_pgm && has_grd) throw IoError(who + ": mixes .pgm and .grd frames");

    Sequence seq;
    seq.id = entry.id;
    seq.cadence_minutes = entry.cadence_minutes;
    if (has_grd) {
        seq.frames = read_grd(dir / kGrdName);
        if (seq.frames.dim(0) != entry.num_frames)
            throw IoError(who + ": grid holds " + std::to_string(seq.frames.dim(0)) + " frames, manifest says " +
                          std::to_string(entry.num_frames));
    } else {
        std::vector<Tensor> frames;
        for (std::int64_t t = 0; t < entry.num_frames; ++t) {
            const fs::path p = dir / frame_name(t);
            if (!fs::exists(p)) throw IoError(who + ": missing frame " + std::to_string(t) + " (" + p.string() + ")");
            Tensor f = read_pgm(p);
            f = f.reshaped({1, f.dim(0), f.dim(1)});
            if (!frames.empty() && f.shape() != frames.front().shape())
                throw IoError(who + ": frame " + std::to_string(t) + " is " + shape_str(f.shape()) +
                              ", earlier frames are " + shape_str(frames.front().shape()));
            frames.push_back(std::move(f));
        }
        if (pgm_files != entry.num_frames)
            throw IoError(who + ": found " + std::to_string(pgm_files) + " frames, manifest says " +
                          std::to_string(entry.num_frames));
        seq.frames = Tensor::stack(frames);
    }
    try {
        validate_sequence(seq);
    } catch (const ShapeError& e) {
        throw IoError(e.what());
    }
    return seq;
}

Sequence load_sequence_dir(const fs::path& dir, std::string id) {
    if (!fs::is_directory(dir)) throw IoError("sequence directory " + dir.string() + " not found");
    ManifestEntry entry;
    entry.id = id.empty() ? dir.filename().string() : std::move(id);
    if (fs::exists(dir / kGrdName)) {
        entry.num_frames = read_grd(dir / kGrdName).dim(0);
    } else {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".pgm" && e.path().filename().string().rfind("frame_", 0) == 0)
                ++entry.num_frames;
    }
    if (entry.num_frames == 0) throw IoError(dir.string() + ": no frame_NNN.pgm files or " + kGrdName);
    return load_sequence(dir, entry);
}

std::vector<Sequence> load_sequences(const fs::path& root, const std::optional<std::string>& split) {
    std::vector<Sequence> out;
    for (const auto& e : read_manifest(root)) {
        if (split && e.split != *split) continue;
        out.push_back(load_sequence(root / e.split / e.id, e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preparation

bool is_noisy(const Sequence& seq, double active_floor) {
    const auto T = seq.length();
    if (T == 0) return true;
    const auto plane = seq.frames.numel() / T;
    std::vector<bool> zero(static_cast<std::size_t>(T));
    std::vector<bool> active(static_cast<std::size_t>(T));
    const double* d = seq.frames.data().data();
    for (std::int64_t t = 0; t < T; ++t) {
        bool all_zero = true;
        double sum = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
            const double v = d[t * plane + i];
            all_zero = all_zero && v == 0.0;
            sum += v;
        }
        zero[static_cast<std::size_t>(t)] = all_zero;
        active[static_cast<std::size_t>(t)] = sum / static_cast<double>(plane) > active_floor;
    }
    if (std::all_of(zero.begin(), zero.end(), [](bool z) { return z; })) return true;
    for (std::size_t t = 0; t < zero.size(); ++t) {
        if (!zero[t]) continue;
        if ((t > 0 && active[t - 1]) || (t + 1 < zero.size() && active[t + 1])) return true;
    }
    return false;
}

std::vector<Sequence> filter_noisy(const std::vector<Sequence>& seqs, double active_floor) {
    std::vector<Sequence> out;
    for (const auto& s : seqs)
        if (!is_noisy(s, active_floor)) out.push_back(s);
    return out;
}

std::int64_t window_count(std::int64_t length, int J, int K, int stride) {
    if (J < 1 || K < 1 || stride < 1) throw ShapeError("window: need J, K, stride >= 1");
    if (length < J + K) return 0;
    return (length - J - K) / stride + 1;
}

std::vector<WindowSample> window(const Sequence& seq, int J, int K, int stride) {
    if (J < 2) throw ShapeError("window: J must be >= 2");
    const auto n = window_count(seq.length(), J, K, stride);
    const auto plane = seq.height() * seq.width();
    const double* d = seq.frames.data().data();
    std::vector<WindowSample> out;
    for (std::int64_t w = 0; w < n; ++w) {
        const auto start = w * stride;
        const double* in = d + start * plane;
        const double* tg = d + (start + J) * plane;
        out.push_back({Tensor({J, 1, seq.height(), seq.width()}, std::vector<double>(in, in + J * plane)),
                       Tensor({K, 1, seq.height(), seq.width()}, std::vector<double>(tg, tg + K * plane))});
    }
    return out;
}

std::vector<WindowRef> window_index(const std::vector<Sequence>& seqs, int J, int K, int stride) {
    std::vector<WindowRef> out;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto n = window_count(seqs[s].length(), J, K, stride);
        for (std::int64_t w = 0; w < n; ++w) out.push_back({s, w * stride});
    }
    return out;
}

Batch make_batch(const std::vector<Sequence>& seqs, const std::vector<WindowRef>& refs,
                 const std::vector<std::size_t>& picks, int J, int K) {
    if (picks.empty()) throw ShapeError("make_batch: empty batch");
    const auto& first = seqs.at(refs.at(picks[0]).sequence);
    const auto h = first.height(), w = first.width(), plane = h * w;
    const auto B = static_cast<std::int64_t>(picks.size());
    Batch batch{Tensor({J, B, 1, h, w}), Tensor({K, B, 1, h, w})};
    for (std::int64_t b = 0; b < B; ++b) {
        const auto& ref = refs.at(picks[static_cast<std::size_t>(b)]);
        const auto& seq = seqs.at(ref.sequence);
        if (seq.height() != h || seq.width() != w) throw ShapeError("make_batch: sequences differ in frame size");
        if (ref.start + J + K > seq.length()) throw ShapeError("make_batch: window runs past sequence " + seq.id);
        const double* src = seq.frames.data().data();
        for (int j = 0; j < J; ++j)
            std::memcpy(batch.inputs.data().data() + (j * B + b) * plane, src + (ref.start + j) * plane,
                        sizeof(double) * static_cast<std::size_t>(plane));
        for (int k = 0; k < K; ++k)
            std::memcpy(batch.targets.data().data() + (k * B + b) * plane, src + (ref.start + J + k) * plane,
                        sizeof(double) * static_cast<std::size_t>(plane));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Scheduled sampling

void SamplingSchedule::validate() const {
    if (!(0.0 <= end_p && end_p <= start_p && start_p <= 1.0))
        throw ConfigError("sampling: need 0 <= end_p <= start_p <= 1");
    if (decay_steps < 1) throw ConfigError("sampling.decay_steps: must be >= 1");
}

double teacher_probability(std::int64_t iteration, const SamplingSchedule& schedule) {
    const double frac =
        std::min(1.0, static_cast<double>(std::max<std::int64_t>(iteration, 0)) / schedule.decay_steps);
    return schedule.start_p - (schedule.start_p - schedule.end_p) * frac;
}

std::vector<bool> sampling_mask(std::int64_t iteration, const SamplingSchedule& schedule, int K,
                                std::uint64_t seed) {
    schedule.validate();
    const auto it = static_cast<std::uint64_t>(iteration);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(it >> 32), 0x5a3du};
    std::mt19937_64 rng(seq);
    const double p = teacher_probability(iteration, schedule);
    std::vector<bool> mask(static_cast<std::size_t>(std::max(K, 0)));
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = uniform01(rng) < p;
    return mask;
}

// ---------------------------------------------------------------------------
// Rendering

Tensor render_strip(const std::vector<Tensor>& frames, int gap, double gap_value) {
    if (frames.empty()) throw ShapeError("render_strip: no frames");
    const auto [h, w] = image_dims(frames.front());
    const auto n = static_cast<std::int64_t>(frames.size());
    const auto total_w = n * w + (n - 1) * gap;
    Tensor strip({h, total_w}, gap_value);
    for (std::int64_t k = 0; k < n; ++k) {
        const auto [fh, fw] = image_dims(frames[static_cast<std::size_t>(k)]);
        if (fh != h || fw != w) throw ShapeError("render_strip: frames differ in size");
        const double* src = frames[static_cast<std::size_t>(k)].data().data();
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j) strip[i * total_w + k * (w + gap) + j] = src[i * w + j];
    }
    return strip;
}

}  // namespace fdnet
