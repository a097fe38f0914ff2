#include "ppgtcn/synth.hpp"

#include <cmath>

#include "ppgtcn/rng.hpp"

namespace ppgtcn {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

/// RBJ biquad bandpass (constant peak gain), 0.5-5 Hz at 32 Hz.
struct Bandpass {
    double b0, b1, b2, a1, a2;
    double z1 = 0.0, z2 = 0.0;

    Bandpass() {
        const double f_lo = 0.5, f_hi = 5.0, fs = kSampleRateHz;
        const double f0 = std::sqrt(f_lo * f_hi);
        const double q = f0 / (f_hi - f_lo);
        const double w0 = kTwoPi * f0 / fs;
        const double alpha = std::sin(w0) / (2.0 * q);
        const double a0 = 1.0 + alpha;
        b0 = alpha / a0;
        b1 = 0.0;
        b2 = -alpha / a0;
        a1 = -2.0 * std::cos(w0) / a0;
        a2 = (1.0 - alpha) / a0;
    }

    float step(double x) {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return static_cast<float>(y);
    }
};

} // namespace

void SubjectProfile::validate() const {
    if (!(bpm_lo >= 40.0f && bpm_lo <= bpm_hi && bpm_hi <= 200.0f)) {
        throw ArgumentError("subject profile: HR band must satisfy 40 <= lo <= hi <= 200");
    }
    if (!(artifact >= 0.0f && artifact <= 1.0f)) {
        throw ArgumentError("subject profile: artifact intensity must be in [0,1]");
    }
    if (!(duration_s >= 16.0f)) {
        throw ArgumentError("subject profile: duration must be at least 16 s");
    }
}

Recording synth_subject(const SubjectProfile& profile) {
    profile.validate();
    const std::size_t n =
        static_cast<std::size_t>(std::llround(profile.duration_s * kSampleRateHz));

    Rng root(profile.seed);
    Rng hr_rng = root.fork(1);
    Rng ppg_rng = root.fork(2);
    Rng accel_rng[3] = {root.fork(3), root.fork(4), root.fork(5)};
    Rng burst_rng = root.fork(6);

    Recording rec;
    rec.subject_id = profile.id;
    Streams& s = rec.streams;
    s.ppg.resize(n);
    s.hr.resize(n);
    for (auto& a : s.accel) a.resize(n);

    // HR: bounded random walk, step <= 2 BPM per second.
    const double max_step = 2.0 / kSampleRateHz;
    double hr = profile.bpm_lo == profile.bpm_hi
                    ? profile.bpm_lo
                    : hr_rng.uniform(profile.bpm_lo, profile.bpm_hi);
    for (std::size_t i = 0; i < n; ++i) {
        s.hr[i] = static_cast<float>(hr);
        hr += hr_rng.uniform(-max_step, max_step);
        if (hr < profile.bpm_lo) hr = profile.bpm_lo;
        if (hr > profile.bpm_hi) hr = profile.bpm_hi;
    }

    // Accelerometer: band-limited noise shaped into bursts.
    for (int c = 0; c < 3; ++c) {
        Bandpass bp;
        double env = 0.2, target = 0.2;
        std::size_t next_switch = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i >= next_switch) {
                target = burst_rng.uniform() < 0.5 ? 0.1 : 1.0;
                next_switch = i + static_cast<std::size_t>(
                                      burst_rng.uniform(2.0, 6.0) * kSampleRateHz);
            }
            env += 0.02 * (target - env);
            const float band = bp.step(accel_rng[c].uniform(-1.0, 1.0));
            s.accel[c][i] = static_cast<float>(4.0 * band * env);
        }
    }

    // PPG: harmonic at the instantaneous HR plus motion artifact and noise.
    double phase = ppg_rng.uniform(0.0, kTwoPi);
    for (std::size_t i = 0; i < n; ++i) {
        const double motion = (s.accel[0][i] + s.accel[1][i] + s.accel[2][i]) / 3.0;
        s.ppg[i] = static_cast<float>(std::sin(phase) + 0.3 * std::sin(2.0 * phase) +
                                      profile.artifact * 1.5 * motion +
                                      0.05 * ppg_rng.normal());
        phase += kTwoPi * (s.hr[i] / 60.0) / kSampleRateHz;
        if (phase > kTwoPi) phase -= kTwoPi;
    }

    return rec;
}

std::vector<SubjectProfile> default_profiles(int subjects, double minutes, std::uint64_t seed) {
    if (subjects < 1) throw ArgumentError("default_profiles: need at least one subject");
    if (minutes * 60.0 < 16.0) throw ArgumentError("default_profiles: duration below 16 s");
    std::vector<SubjectProfile> out;
    for (int i = 0; i < subjects; ++i) {
        SubjectProfile p;
        p.id = i + 1;
        p.duration_s = static_cast<float>(minutes * 60.0);
        p.seed = seed + static_cast<std::uint64_t>(i) * 7919u;
        if (subjects > 1 && i == subjects - 1) {
            // One deliberately out-of-band subject.
            p.bpm_lo = 160.0f;
            p.bpm_hi = 180.0f;
            p.artifact = 0.15f;
        } else {
            p.bpm_lo = 55.0f + 5.0f * static_cast<float>(i % 5);
            p.bpm_hi = p.bpm_lo + 30.0f;
            p.artifact = 0.15f * static_cast<float>(i % 3);
        }
        out.push_back(p);
    }
    return out;
}

RecordingSet synth_set(const std::vector<SubjectProfile>& profiles) {
    RecordingSet out;
    out.reserve(profiles.size());
    for (const auto& p : profiles) out.push_back(synth_subject(p));
    return out;
}

} // namespace ppgtcn
