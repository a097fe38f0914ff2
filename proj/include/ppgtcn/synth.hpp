#pragma once

#include <cstdint>
#include <vector>

#include "ppgtcn/pipeline.hpp"

namespace ppgtcn {

/// Generation profile for one synthetic subject. The HR trace is a bounded
/// random walk inside [bpm_lo, bpm_hi]; `artifact` in [0,1] scales the
/// accelerometer-correlated corruption mixed into the PPG channel.
struct SubjectProfile {
    int id = 0;
    float bpm_lo = 60.0f;
    float bpm_hi = 90.0f;
    float artifact = 0.0f;
    float duration_s = 600.0f;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Recording {
    int subject_id = 0;
    Streams streams;
};

using RecordingSet = std::vector<Recording>;

/// Deterministic generation: the same profile (including seed) yields a
/// bit-identical recording. PPG = sin at the instantaneous HR frequency plus
/// a 0.3 second harmonic, artifact * motion term, and white noise (sigma
/// 0.05); accelerometer channels are band-limited (0.5-5 Hz) noise bursts.
Recording synth_subject(const SubjectProfile& profile);

/// Default desk-scale set: `subjects` profiles of `minutes` each, the last
/// one out-of-band at 160-180 BPM (the rest walk inside 55-105 BPM).
std::vector<SubjectProfile> default_profiles(int subjects, double minutes, std::uint64_t seed);

RecordingSet synth_set(const std::vector<SubjectProfile>& profiles);

} // namespace ppgtcn
