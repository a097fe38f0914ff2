#include "ppgtcn/container.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

namespace ppgtcn {

namespace {

using container::SectionKind;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void bytes(const void* p, std::size_t n) {
        const auto* q = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), q, q + n);
    }

    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader over a byte span; errors carry absolute offsets.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::uint64_t size, std::uint64_t base)
        : data_(data), size_(size), base_(base) {}

    std::uint64_t offset() const { return base_ + pos_; }
    std::uint64_t remaining() const { return size_ - pos_; }

    void need(std::uint64_t n, const char* what) const {
        if (pos_ + n > size_) {
            throw FormatError(std::string("truncated ") + what, offset());
        }
    }

    std::uint8_t u8() {
        need(1, "byte");
        return data_[pos_++];
    }
    std::uint16_t u16() {
        need(2, "u16");
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8, "u64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void read_bytes(void* out, std::uint64_t n, const char* what) {
        need(n, what);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

private:
    const std::uint8_t* data_;
    std::uint64_t size_;
    std::uint64_t base_;
    std::uint64_t pos_ = 0;
};

struct Section {
    SectionKind kind;
    std::vector<std::uint8_t> payload;
};

void write_container(const std::string& path, const std::vector<Section>& sections) {
    ByteWriter out;
    out.bytes("TPPG", 4);
    out.u16(container::kVersion);
    out.u16(static_cast<std::uint16_t>(sections.size()));
    std::uint64_t offset = 8 + sections.size() * 20;
    for (const Section& s : sections) {
        out.u32(static_cast<std::uint32_t>(s.kind));
        out.u64(offset);
        out.u64(s.payload.size());
        offset += s.payload.size();
    }
    for (const Section& s : sections) out.bytes(s.payload.data(), s.payload.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArgumentError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data().data()),
            static_cast<std::streamsize>(out.data().size()));
    if (!f) throw ArgumentError("write failed: " + path);
}

struct RawSection {
    std::uint32_t kind;
    std::uint64_t offset;
    std::uint64_t length;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot open: " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
    if (!f) throw ArgumentError("read failed: " + path);
    return buf;
}

std::vector<RawSection> parse_header(const std::vector<std::uint8_t>& file) {
    if (file.size() < 8) throw FormatError("truncated header", file.size());
    if (std::memcmp(file.data(), "TPPG", 4) != 0) throw FormatError("bad magic", 0);
    ByteReader head(file.data() + 4, file.size() - 4, 4);
    const std::uint16_t version = head.u16();
    if (version != container::kVersion) {
        throw FormatError("unsupported container version " + std::to_string(version), 4);
    }
    const std::uint16_t count = head.u16();
    std::vector<RawSection> sections;
    for (std::uint16_t i = 0; i < count; ++i) {
        RawSection s;
        const std::uint64_t entry_at = head.offset();
        s.kind = head.u32();
        s.offset = head.u64();
        s.length = head.u64();
        if (s.offset > file.size() || s.length > file.size() - s.offset) {
            throw FormatError("section extends past end of file", entry_at);
        }
        sections.push_back(s);
    }
    // Non-overlap check.
    std::vector<RawSection> sorted = sections;
    std::sort(sorted.begin(), sorted.end(),
              [](const RawSection& a, const RawSection& b) { return a.offset < b.offset; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i - 1].offset + sorted[i - 1].length > sorted[i].offset) {
            throw FormatError("overlapping sections", sorted[i].offset);
        }
    }
    return sections;
}

// ---- payload encodings ----

void encode_tensor(ByteWriter& w, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.i32(d);
    w.bytes(t.data(), t.numel() * 4);
}

Tensor decode_tensor(ByteReader& r) {
    const std::uint32_t rank = r.u32();
    if (rank > 4) throw FormatError("implausible tensor rank", r.offset() - 4);
    std::vector<int> shape;
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::int32_t d = r.i32();
        if (d < 1) throw FormatError("non-positive tensor dimension", r.offset() - 4);
        shape.push_back(d);
        numel *= static_cast<std::uint64_t>(d);
    }
    if (numel * 4 > r.remaining()) throw FormatError("tensor data exceeds section", r.offset());
    Tensor t(shape);
    r.read_bytes(t.data(), numel * 4, "tensor data");
    return t;
}

std::vector<std::uint8_t> encode_weights(const WeightSet& ws) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(ws.layers.size()));
    for (const auto& layer : ws.layers) {
        w.u32(static_cast<std::uint32_t>(layer.size()));
        for (const Tensor& t : layer) encode_tensor(w, t);
    }
    return w.data();
}

WeightSet decode_weights(ByteReader& r) {
    WeightSet ws;
    const std::uint32_t layers = r.u32();
    ws.layers.resize(layers);
    for (std::uint32_t i = 0; i < layers; ++i) {
        const std::uint32_t count = r.u32();
        if (count > 8) throw FormatError("implausible tensor count", r.offset() - 4);
        for (std::uint32_t j = 0; j < count; ++j) ws.layers[i].push_back(decode_tensor(r));
    }
    return ws;
}

std::vector<std::uint8_t> encode_norm(const NormStats& n) {
    ByteWriter w;
    for (float v : n.mean) w.f32(v);
    for (float v : n.stdev) w.f32(v);
    return w.data();
}

NormStats decode_norm(ByteReader& r) {
    NormStats n;
    for (auto& v : n.mean) v = r.f32();
    for (auto& v : n.stdev) v = r.f32();
    return n;
}

std::vector<std::uint8_t> encode_quant(const QuantizedModel& q) {
    ByteWriter w;
    w.f32(q.input_qp.scale);
    w.i32(q.input_qp.zero_point);
    w.u32(static_cast<std::uint32_t>(q.records.size()));
    for (const QuantRecord& rec : q.records) {
        w.u32(static_cast<std::uint32_t>(rec.topo_index));
        w.f32(rec.w_scale);
        w.f32(rec.in_qp.scale);
        w.i32(rec.in_qp.zero_point);
        w.f32(rec.out_qp.scale);
        w.i32(rec.out_qp.zero_point);
        w.i32(rec.mult);
        w.i32(rec.shift);
        w.u8(rec.fuse_relu);
        w.u64(rec.w.size());
        w.bytes(rec.w.data(), rec.w.size());
        w.u64(rec.bias.size());
        w.bytes(rec.bias.data(), rec.bias.size() * 4);
    }
    return w.data();
}

QuantizedModel decode_quant(ByteReader& r) {
    QuantizedModel q;
    q.input_qp.scale = r.f32();
    q.input_qp.zero_point = r.i32();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        QuantRecord rec;
        rec.topo_index = static_cast<int>(r.u32());
        rec.w_scale = r.f32();
        rec.in_qp.scale = r.f32();
        rec.in_qp.zero_point = r.i32();
        rec.out_qp.scale = r.f32();
        rec.out_qp.zero_point = r.i32();
        rec.mult = r.i32();
        rec.shift = r.i32();
        rec.fuse_relu = r.u8();
        const std::uint64_t wn = r.u64();
        if (wn > r.remaining()) throw FormatError("quant weights exceed section", r.offset());
        rec.w.resize(wn);
        r.read_bytes(rec.w.data(), wn, "quant weights");
        const std::uint64_t bn = r.u64();
        if (bn * 4 > r.remaining()) throw FormatError("quant bias exceeds section", r.offset());
        rec.bias.resize(bn);
        r.read_bytes(rec.bias.data(), bn * 4, "quant bias");
        q.records.push_back(std::move(rec));
    }
    return q;
}

std::vector<std::uint8_t> encode_dataset(const RecordingSet& recs) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(recs.size()));
    for (const Recording& rec : recs) {
        w.u32(static_cast<std::uint32_t>(rec.subject_id));
        w.u64(rec.streams.length());
        const std::uint64_t n = rec.streams.length();
        w.bytes(rec.streams.ppg.data(), n * 4);
        for (const auto& a : rec.streams.accel) w.bytes(a.data(), n * 4);
        w.bytes(rec.streams.hr.data(), n * 4);
    }
    return w.data();
}

RecordingSet decode_dataset(ByteReader& r) {
    RecordingSet out;
    const std::uint32_t subjects = r.u32();
    std::set<int> seen;
    for (std::uint32_t i = 0; i < subjects; ++i) {
        Recording rec;
        const std::uint64_t id_at = r.offset();
        rec.subject_id = static_cast<int>(r.u32());
        if (!seen.insert(rec.subject_id).second) {
            throw FormatError("duplicate subject id " + std::to_string(rec.subject_id), id_at);
        }
        const std::uint64_t n = r.u64();
        if (n * 20 > r.remaining()) {
            throw FormatError("subject streams exceed section", r.offset());
        }
        rec.streams.ppg.resize(n);
        r.read_bytes(rec.streams.ppg.data(), n * 4, "ppg stream");
        for (auto& a : rec.streams.accel) {
            a.resize(n);
            r.read_bytes(a.data(), n * 4, "accel stream");
        }
        rec.streams.hr.resize(n);
        r.read_bytes(rec.streams.hr.data(), n * 4, "hr stream");
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const NetworkSpec& topo = ckpt.quant ? ckpt.quant->topology : ckpt.spec;
    trace_shapes(topo);
    if (ckpt.weights) check_weights(ckpt.spec, *ckpt.weights);
    if (ckpt.quant && ckpt.weights && !(ckpt.spec == ckpt.quant->topology)) {
        throw ArgumentError(
            "checkpoint cannot mix float weights with a quantized model of another topology");
    }

    std::vector<Section> sections;
    const std::string topo_text = topology_to_text(topo);
    sections.push_back(
        {SectionKind::Topology,
         std::vector<std::uint8_t>(topo_text.begin(), topo_text.end())});
    if (ckpt.weights) sections.push_back({SectionKind::FloatWeights, encode_weights(*ckpt.weights)});
    if (ckpt.quant) sections.push_back({SectionKind::Quant, encode_quant(*ckpt.quant)});
    if (ckpt.norm) sections.push_back({SectionKind::NormStats, encode_norm(*ckpt.norm)});
    write_container(path, sections);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::vector<std::uint8_t> file = read_file(path);
    const std::vector<RawSection> sections = parse_header(file);

    Checkpoint ckpt;
    bool have_topology = false;
    for (const RawSection& s : sections) {
        ByteReader r(file.data() + s.offset, s.length, s.offset);
        switch (static_cast<SectionKind>(s.kind)) {
            case SectionKind::Topology: {
                std::string text(reinterpret_cast<const char*>(file.data() + s.offset),
                                 static_cast<std::size_t>(s.length));
                try {
                    ckpt.spec = topology_from_text(text);
                } catch (const ArgumentError& e) {
                    throw FormatError(e.what(), s.offset);
                }
                have_topology = true;
                break;
            }
            case SectionKind::FloatWeights:
                ckpt.weights = decode_weights(r);
                break;
            case SectionKind::Quant:
                ckpt.quant = decode_quant(r);
                break;
            case SectionKind::NormStats:
                ckpt.norm = decode_norm(r);
                break;
            default:
                break; // unknown kinds are skipped, never fatal
        }
    }
    if (!have_topology) throw FormatError("checkpoint has no topology section", 8);
    if (ckpt.weights) {
        try {
            check_weights(ckpt.spec, *ckpt.weights);
        } catch (const DimensionError& e) {
            throw FormatError(std::string("weights do not match topology: ") + e.what(), 8);
        }
    }
    if (ckpt.quant) ckpt.quant->topology = ckpt.spec;
    return ckpt;
}

void save_dataset(const std::string& path, const RecordingSet& recordings) {
    for (const Recording& rec : recordings) {
        const std::uint64_t n = rec.streams.length();
        for (const auto& a : rec.streams.accel) {
            if (a.size() != n) throw ArgumentError("dataset: inconsistent stream lengths");
        }
        if (rec.streams.hr.size() != n) {
            throw ArgumentError("dataset: inconsistent stream lengths");
        }
    }
    write_container(path, {{SectionKind::Dataset, encode_dataset(recordings)}});
}

RecordingSet load_dataset(const std::string& path) {
    const std::vector<std::uint8_t> file = read_file(path);
    const std::vector<RawSection> sections = parse_header(file);
    for (const RawSection& s : sections) {
        if (static_cast<SectionKind>(s.kind) == SectionKind::Dataset) {
            ByteReader r(file.data() + s.offset, s.length, s.offset);
            return decode_dataset(r);
        }
    }
    throw FormatError("no dataset section in container", 8);
}

} // namespace ppgtcn
