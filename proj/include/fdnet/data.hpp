#pragma once

// Radar-echo sequences: a synthetic Gaussian-blob generator, on-disk
// datasets (PGM frames or .grd grids plus a JSON manifest), filtering,
// sliding windows and scheduled-sampling masks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fdnet/tensor.hpp"

namespace fdnet {

/// frames is [T,1,H,W] with values in [0,1].
struct Sequence {
    std::string id;
    Tensor frames;
    int cadence_minutes = 6;

    std::int64_t length() const { return frames.empty() ? 0 : frames.dim(0); }
    std::int64_t height() const { return frames.dim(2); }
    std::int64_t width() const { return frames.dim(3); }
    /// Frame t as [1,H,W].
    Tensor frame(std::int64_t t) const { return frames.select(t); }
};

/// Throws ShapeError unless frames is [T>=2,1,H,W] with values in [0,1].
void validate_sequence(const Sequence& seq);

// ---------------------------------------------------------------------------
// Synthetic blobs

struct Blob {
    double cy = 0, cx = 0;        // initial centre (pixels)
    double vy = 0, vx = 0;        // velocity (pixels/frame)
    double amplitude = 1;         // peak intensity at t=0, in (0,1]
    double ry = 1, rx = 1;        // Gaussian sigmas along the blob's own axes
    double growth = 0;            // radii scale by (1 + t*growth)
    double angle = 0;             // initial orientation (radians)
    double rotation = 0;          // radians/frame
    double decay = 0;             // amplitude scales by exp(-t*decay)
    int birth = 0;                // first frame in which the blob exists

    void validate() const;
};

/// Adds blob `b` at frame t into an H*W plane (unclipped).
void splat_blob(const Blob& b, int t, std::int64_t height, std::int64_t width, double* plane);

/// Clipped sum of blobs at frame t, as [1,H,W].
Tensor render_blobs(const std::vector<Blob>& blobs, int t, std::int64_t height, std::int64_t width);

struct Range {
    double lo = 0, hi = 0;
};

struct SynthConfig {
    std::uint64_t seed = 0;
    int num_sequences = 64;
    int length = 12;
    int height = 32;
    int width = 32;
    int min_blobs = 1;
    int max_blobs = 3;
    Range speed{0.0, 1.5};        // |velocity|, direction uniform
    Range amplitude{0.5, 1.0};
    Range radius{2.0, 5.0};
    Range aspect{1.0, 1.8};       // rx / ry
    Range growth{-0.03, 0.06};
    Range rotation{-0.1, 0.1};
    Range decay{0.0, 0.08};
    int max_birth = 0;            // births drawn from [0, max_birth]
    /// Fraction of the frame kept free at each border when placing centres.
    double margin = 0.2;
    std::string id_prefix = "seq";

    /// Throws ConfigError naming the offending field as "synth.<field>".
    void validate() const;
};

/// Uniform double in [0,1) from 53 high bits; stable across standard libraries.
double uniform01(std::mt19937_64& rng);

std::vector<Blob> sample_blobs(const SynthConfig& cfg, std::mt19937_64& rng);
std::vector<Sequence> gen_synthetic(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Files

/// 8-bit binary PGM (P5). Values in [0,1] are stored as round(255*v).
void write_pgm(const std::filesystem::path& path, const Tensor& image);
/// Returns [H,W] normalized by 1/255.
Tensor read_pgm(const std::filesystem::path& path);

/// "FDG1", u32 H, u32 W, u32 T, then T*H*W little-endian f32.
void write_grd(const std::filesystem::path& path, const Tensor& frames);
/// Returns [T,1,H,W].
Tensor read_grd(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    std::string split;
    std::int64_t num_frames = 0;
    int cadence_minutes = 6;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const std::vector<ManifestEntry>& entries);

enum class FrameFormat { kPgm, kGrd };

/// Writes root/<split>/<id>/ frames; does not touch the manifest.
void write_sequence(const std::filesystem::path& root, const std::string& split, const Sequence& seq,
                    FrameFormat format = FrameFormat::kPgm);

/// Loads every manifest entry (or only `split`) in manifest order.
std::vector<Sequence> load_sequences(const std::filesystem::path& root,
                                     const std::optional<std::string>& split = std::nullopt);
/// Loads one sequence directory, checking it against the manifest entry.
Sequence load_sequence(const std::filesystem::path& dir, const ManifestEntry& entry);
/// Loads a sequence directory without a manifest; the frame count is taken
/// from the files present and the id defaults to the directory name.
Sequence load_sequence_dir(const std::filesystem::path& dir, std::string id = {});

// ---------------------------------------------------------------------------
// Preparation

/// True when an all-zero frame sits next to a frame whose mean exceeds
/// `active_floor`, or when every frame is zero.
bool is_noisy(const Sequence& seq, double active_floor = 1e-3);
std::vector<Sequence> filter_noisy(const std::vector<Sequence>& seqs, double active_floor = 1e-3);

/// floor((T-J-K)/stride)+1 when T >= J+K, else 0.
std::int64_t window_count(std::int64_t length, int J, int K, int stride);

struct WindowSample {
    Tensor inputs;   // [J,1,H,W]
    Tensor targets;  // [K,1,H,W]
};
std::vector<WindowSample> window(const Sequence& seq, int J, int K, int stride);

/// Position of one window inside a sequence list.
struct WindowRef {
    std::size_t sequence = 0;
    std::int64_t start = 0;
};
std::vector<WindowRef> window_index(const std::vector<Sequence>& seqs, int J, int K, int stride);

struct Batch {
    Tensor inputs;   // [J,B,1,H,W]
    Tensor targets;  // [K,B,1,H,W]
};
Batch make_batch(const std::vector<Sequence>& seqs, const std::vector<WindowRef>& refs,
                 const std::vector<std::size_t>& picks, int J, int K);

// ---------------------------------------------------------------------------
// Scheduled sampling

struct SamplingSchedule {
    double start_p = 1.0;
    double end_p = 0.0;
    std::int64_t decay_steps = 1000;

    void validate() const;
};

/// start_p - (start_p - end_p) * min(1, iteration / decay_steps).
double teacher_probability(std::int64_t iteration, const SamplingSchedule& schedule);

/// K independent draws, true meaning "feed the ground truth". Deterministic
/// in (iteration, seed).
std::vector<bool> sampling_mask(std::int64_t iteration, const SamplingSchedule& schedule, int K,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rendering

/// Frames ([1,H,W] or [H,W]) side by side with `gap` columns of `gap_value`.
Tensor render_strip(const std::vector<Tensor>& frames, int gap = 2, double gap_value = 1.0);

}  // namespace fdnet
