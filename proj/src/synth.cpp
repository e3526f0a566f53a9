#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gaitcast/error.hpp"
#include "gaitcast/motion_data.hpp"

namespace gaitcast::data {

namespace {

// NTU joint indices.
enum Joint : std::size_t {
    SpineBase, SpineMid, Neck, Head,
    ShoulderL, ElbowL, WristL, HandL,
    ShoulderR, ElbowR, WristR, HandR,
    HipL, KneeL, AnkleL, FootL,
    HipR, KneeR, AnkleR, FootR,
    SpineShoulder, HandTipL, ThumbL, HandTipR, ThumbR,
};

// Joint order used when fewer than 25 joints are requested: torso and head
// first (so the head stays at index 3), then legs, then arms.
constexpr std::array<std::size_t, kNtuJoints> kReducedOrder{
    SpineBase, SpineMid, Neck, Head, HipL, KneeL, AnkleL, HipR, KneeR, AnkleR,
    ShoulderL, ElbowL, WristL, ShoulderR, ElbowR, WristR, FootL, FootR, SpineShoulder,
    HandL, HandR, HandTipL, ThumbL, HandTipR, ThumbR,
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

// Unit segment hanging down, swung by `angle` in the sagittal plane (positive = forward).
Vec3 swing(double angle) { return {0.0, -std::cos(angle), std::sin(angle)}; }

struct Walker {
    double height;      // body scale
    double cadence;     // gait cycles per second
    double stride;      // hip swing amplitude (rad)
    double knee;        // knee flexion amplitude (rad)
    double arm_swing;   // shoulder swing amplitude (rad)
    double lean;        // forward trunk lean (rad)
    double tremor;      // hand tremor amplitude (m)
    double noise;       // sensor noise std (m)
    double phase;
};

Walker sample_walker(double severity, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> jitter(0.85, 1.15);
    std::uniform_real_distribution<double> lean_jitter(-0.05, 0.05);
    std::uniform_real_distribution<double> height(0.85, 1.15);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    Walker w;
    w.height = height(rng);
    w.cadence = (1.0 - 0.4 * severity) * jitter(rng);
    w.stride = (0.45 - 0.25 * severity) * jitter(rng);
    w.knee = (0.9 - 0.5 * severity) * jitter(rng);
    w.arm_swing = (0.45 - 0.35 * severity) * jitter(rng);
    w.lean = 0.03 + 0.25 * severity + lean_jitter(rng);
    w.tremor = 0.015 * severity * jitter(rng);
    w.noise = (0.004 + 0.008 * severity) * jitter(rng);
    w.phase = phase(rng);
    return w;
}

std::array<Vec3, kNtuJoints> pose_at(const Walker& w, double time)
{
    const double pi = std::numbers::pi;
    const double h = w.height;
    const double ph = 2.0 * pi * w.cadence * time + w.phase;

    std::array<Vec3, kNtuJoints> p{};
    const double step_length = 0.7 * h * w.stride;
    const Vec3 root{0.02 * h * std::sin(ph), 0.92 * h + 0.03 * h * w.stride * std::fabs(std::cos(ph)),
                    2.0 * step_length * w.cadence * time};
    p[SpineBase] = root;

    const Vec3 up{0.0, std::cos(w.lean), std::sin(w.lean)};
    p[SpineMid] = root + up * (0.25 * h);
    p[SpineShoulder] = root + up * (0.50 * h);
    p[Neck] = root + up * (0.56 * h);
    p[Head] = root + up * (0.68 * h);

    // Legs: left leg swings with sin(ph), right leg in antiphase.
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        const double leg_phase = ph + (side == 0 ? 0.0 : pi);
        const double hip_angle = w.stride * std::sin(leg_phase);
        const double knee_flex = w.knee * std::max(0.0, std::sin(leg_phase + 0.5 * pi));
        const Vec3 hip = root + Vec3{sign * 0.10 * h, 0.0, 0.0};
        const Vec3 knee = hip + swing(hip_angle) * (0.45 * h);
        const Vec3 ankle = knee + swing(hip_angle - knee_flex) * (0.43 * h);
        const Vec3 foot = ankle + Vec3{0.0, -0.02 * h, 0.12 * h};
        p[side == 0 ? HipL : HipR] = hip;
        p[side == 0 ? KneeL : KneeR] = knee;
        p[side == 0 ? AnkleL : AnkleR] = ankle;
        p[side == 0 ? FootL : FootR] = foot;
    }

    // Arms swing against the leg on the same side.
    const double tremor = w.tremor * std::sin(2.0 * pi * 5.0 * time);
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        const double arm_phase = ph + (side == 0 ? pi : 0.0);
        const double shoulder_angle = w.arm_swing * std::sin(arm_phase) + w.lean;
        const double elbow_angle = shoulder_angle + 0.15 + 0.6 * w.arm_swing * (1.0 + std::sin(arm_phase));
        const Vec3 shoulder = p[SpineShoulder] + Vec3{sign * 0.18 * h, -0.02 * h, 0.0};
        const Vec3 elbow = shoulder + swing(shoulder_angle) * (0.28 * h);
        const Vec3 wrist = elbow + swing(elbow_angle) * (0.25 * h) + Vec3{0.0, tremor, 0.0};
        const Vec3 hand = wrist + swing(elbow_angle) * (0.08 * h);
        p[side == 0 ? ShoulderL : ShoulderR] = shoulder;
        p[side == 0 ? ElbowL : ElbowR] = elbow;
        p[side == 0 ? WristL : WristR] = wrist;
        p[side == 0 ? HandL : HandR] = hand;
        p[side == 0 ? HandTipL : HandTipR] = hand + swing(elbow_angle) * (0.06 * h);
        p[side == 0 ? ThumbL : ThumbR] = hand + Vec3{-sign * 0.03 * h, 0.0, 0.03 * h};
    }
    return p;
}

}  // namespace

SynthDataset synth_dataset(const SynthSpec& spec)
{
    if (spec.classes < 2) {
        throw ConfigError("synth: need at least 2 classes");
    }
    if (spec.clips_per_class < 1 || spec.frames < 1 || spec.joints < 1 || spec.joints > kNtuJoints) {
        throw ConfigError("synth: clips_per_class and frames must be positive and joints in [1,25]");
    }
    if (!(spec.frame_rate > 0.0)) {
        throw ConfigError("synth: frame rate must be positive");
    }

    SynthDataset out;
    out.manifest.class_count = spec.classes;
    out.manifest.joints = spec.joints;
    const bool full_layout = spec.joints == kNtuJoints;

    int index = 0;
    for (int c = 0; c < spec.classes; ++c) {
        const double severity = static_cast<double>(c) / static_cast<double>(spec.classes - 1);
        for (int k = 0; k < spec.clips_per_class; ++k, ++index) {
            std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                              static_cast<std::uint32_t>(index)};
            std::mt19937_64 rng(seq);
            const Walker walker = sample_walker(severity, rng);
            std::normal_distribution<double> noise(0.0, walker.noise);

            PoseSequence poses = PoseSequence::zeros(spec.joints, spec.frames, spec.frame_rate);
            for (std::size_t f = 0; f < spec.frames; ++f) {
                const auto joints = pose_at(walker, static_cast<double>(f) / spec.frame_rate);
                auto fr = poses.frame(f);
                for (std::size_t j = 0; j < spec.joints; ++j) {
                    const Vec3& v = joints[full_layout ? j : kReducedOrder[j]];
                    fr[3 * j] = v.x + noise(rng);
                    fr[3 * j + 1] = v.y + noise(rng);
                    fr[3 * j + 2] = v.z + noise(rng);
                }
            }

            char id[32];
            std::snprintf(id, sizeof id, "%s%04d", spec.subject_prefix.c_str(), index + 1);
            Recording rec;
            rec.poses = std::move(poses);
            rec.label = c;
            rec.subject_id = id;
            rec.source_id = std::string(id) + ".clip";
            out.manifest.entries.push_back(ManifestEntry{rec.source_id, rec.subject_id, c, "train"});
            out.recordings.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace gaitcast::data
