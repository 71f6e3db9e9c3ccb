#include <gtest/gtest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "sf2f/dataset.hpp"
#include "sf2f/io.hpp"
#include "sf2f/model.hpp"
#include "sf2f/phantom.hpp"
#include "sf2f/volume.hpp"
#include "fixtures.hpp"

namespace sf2f {
namespace {

using testing::NiftiFixture;
using testing::float_fixture;

std::string temp_path(const std::string& name) {
    return (std::filesystem::path(::testing::TempDir()) / name).string();
}

// Minimal NIfTI-1 single-file image, written field by field.
std::string section_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.section();
    }
    return "none";
}

TEST(Nifti, FloatFixtureIsVoxelExact) {
    const Volume v = parse_nifti(float_fixture().bytes);
    EXPECT_EQ(v.extents, (std::array<std::size_t, 3>{2, 3, 2}));
    EXPECT_EQ(v.spacing, (std::array<double, 3>{1.0, 1.5, 2.0}));
    for (int i = 0; i < 12; ++i) EXPECT_EQ(v.data[i], static_cast<float>(i) * 0.5f - 1.0f);
    EXPECT_EQ(v.at(1, 2, 1), v.data[1 + 2 * (2 + 3 * 1)]);
}

TEST(Nifti, Int16WithScaling) {
    NiftiFixture f(2, 1, 1, 4, 16);
    f.put<float>(112, 2.0f);
    f.put<float>(116, 1.0f);
    f.append<std::int16_t>(3);
    f.append<std::int16_t>(-4);
    const Volume v = parse_nifti(f.bytes);
    EXPECT_EQ(v.data, (std::vector<float>{7.0f, -7.0f}));
}

TEST(Nifti, Uint8AndZeroSlopeMeansUnscaled) {
    NiftiFixture f(3, 1, 1, 2, 8);
    f.put<float>(116, 50.0f);
    for (std::uint8_t b : {0, 128, 255}) f.append(b);
    EXPECT_EQ(parse_nifti(f.bytes).data, (std::vector<float>{0.0f, 128.0f, 255.0f}));
}

TEST(Nifti, ByteSwappedHeaderAndData) {
    NiftiFixture f(2, 1, 1, 4, 16);
    auto swap_at = [&](std::size_t off, std::size_t n) { std::reverse(f.bytes.begin() + off, f.bytes.begin() + off + n); };
    f.append<std::int16_t>(300);
    f.append<std::int16_t>(-2);
    swap_at(0, 4);
    for (std::size_t o = 40; o < 50; o += 2) swap_at(o, 2);
    swap_at(70, 2);
    swap_at(72, 2);
    for (std::size_t o = 76; o < 92; o += 4) swap_at(o, 4);
    swap_at(108, 4);
    swap_at(352, 2);
    swap_at(354, 2);
    EXPECT_EQ(parse_nifti(f.bytes).data, (std::vector<float>{300.0f, -2.0f}));
}

TEST(Nifti, StructuredErrors) {
    auto bad_magic = float_fixture();
    std::memcpy(bad_magic.bytes.data() + 344, "abc\0", 4);
    EXPECT_EQ(section_of([&] { parse_nifti(bad_magic.bytes); }), "magic");

    auto bad_type = float_fixture();
    bad_type.put<std::int16_t>(70, 64);
    EXPECT_EQ(section_of([&] { parse_nifti(bad_type.bytes); }), "datatype");

    auto four_d = float_fixture();
    four_d.put<std::int16_t>(40, 4);
    EXPECT_EQ(section_of([&] { parse_nifti(four_d.bytes); }), "dim");

    auto zero_dim = float_fixture();
    zero_dim.put<std::int16_t>(44, 0);
    EXPECT_EQ(section_of([&] { parse_nifti(zero_dim.bytes); }), "dim");

    auto truncated = float_fixture();
    truncated.bytes.resize(truncated.bytes.size() - 3);
    EXPECT_EQ(section_of([&] { parse_nifti(truncated.bytes); }), "data");

    EXPECT_EQ(section_of([] { parse_nifti(std::vector<std::uint8_t>(100, 0)); }), "header");
    auto bad_size = float_fixture();
    bad_size.put<std::int32_t>(0, 540);
    EXPECT_EQ(section_of([&] { parse_nifti(bad_size.bytes); }), "sizeof_hdr");
}

TEST(Nifti, GzipFileMatchesPlainFile) {
    const auto f = float_fixture();
    const std::string plain = temp_path("fixture.nii");
    const std::string gz = temp_path("fixture.nii.gz");
    write_file_bytes(plain, f.bytes);
    gzFile out = gzopen(gz.c_str(), "wb");
    ASSERT_NE(out, nullptr);
    ASSERT_EQ(gzwrite(out, f.bytes.data(), static_cast<unsigned>(f.bytes.size())), static_cast<int>(f.bytes.size()));
    gzclose(out);
    EXPECT_EQ(load_volume(gz).data, load_volume(plain).data);
    EXPECT_THROW(load_volume(temp_path("missing.nii")), DataError);
    EXPECT_THROW(load_volume(temp_path("volume.xyz")), DataError);
}

TEST(Rvol, RoundTripIsExactIncludingThroughNifti) {
    const Volume v = parse_nifti(float_fixture().bytes);
    const Volume back = decode_rvol(encode_rvol(v));
    EXPECT_EQ(back.extents, v.extents);
    EXPECT_EQ(back.data, v.data);
    const std::string path = temp_path("fixture.rvol");
    write_rvol(v, path);
    EXPECT_EQ(load_volume(path).data, v.data);

    auto bytes = encode_rvol(v);
    bytes[0] = 'X';
    EXPECT_EQ(section_of([&] { decode_rvol(bytes); }), "magic");
    bytes = encode_rvol(v);
    bytes.pop_back();
    EXPECT_EQ(section_of([&] { decode_rvol(bytes); }), "data");
}

// ---------------------------------------------------------------------------

TEST(Manifest, ParsesAndResolvesPaths) {
    const std::string text =
        "subject_id,label,center,modality,path\n"
        "s1,patient,A,t1,s1.rvol\n"
        "s2,control,B,t1,/abs/s2.nii.gz\n"
        "s1,patient,A,dti,s1_dti.rvol\n";
    const Manifest m = parse_manifest(text, "/data");
    ASSERT_EQ(m.rows.size(), 3u);
    EXPECT_EQ(m.rows[0].label, kPatient);
    EXPECT_EQ(m.rows[1].label, kControl);
    EXPECT_EQ(m.rows[0].path, "/data/s1.rvol");
    EXPECT_EQ(m.rows[1].path, "/abs/s2.nii.gz");
    EXPECT_EQ(m.for_modality("t1").size(), 2u);
    EXPECT_EQ(m.for_modality("").size(), 3u);
    EXPECT_EQ(parse_manifest(format_manifest(m)).rows.size(), 3u);
}

TEST(Manifest, Errors) {
    const std::string header = "subject_id,label,center,modality,path\n";
    EXPECT_THROW(parse_manifest("id,label\n"), DataError);
    EXPECT_THROW(parse_manifest(header + "s1,patient,A,t1\n"), DataError);
    EXPECT_THROW(parse_manifest(header + "s1,sick,A,t1,p\n"), DataError);
    EXPECT_THROW(parse_manifest(header + ",patient,A,t1,p\n"), DataError);
    EXPECT_THROW(parse_manifest(header + "s1,patient,A,t1,p\ns1,control,A,t1,q\n"), DataError);
    EXPECT_THROW(parse_manifest(""), DataError);
}

// ---------------------------------------------------------------------------

Volume ramp_volume(std::size_t nx, std::size_t ny, std::size_t nz) {
    Volume v(nx, ny, nz);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) v.at(x, y, z) = static_cast<float>(x + 10 * y + 100 * z);
    return v;
}

TEST(Slices, CoronalPlaneOrientation) {
    const Volume v = ramp_volume(3, 4, 2);
    const Image s = coronal_slice(v, 2);
    ASSERT_EQ(s.height, 2u);
    ASSERT_EQ(s.width, 3u);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(s.at(z, x), v.at(x, 1, z));
    EXPECT_THROW(coronal_slice(v, 0), DataError);
    EXPECT_THROW(coronal_slice(v, 5), DataError);
}

TEST(Slices, SelectCountsIndicesAndDeterminism) {
    const Volume v = ramp_volume(6, 218, 6);
    const SliceOptions opt{8, 8, true};
    const SliceSet s = select_slices(v, 111, 125, opt);
    ASSERT_EQ(s.slices.size(), 15u);
    for (std::size_t i = 0; i < 15; ++i) {
        EXPECT_EQ(s.slices[i].index, 111 + static_cast<int>(i));
        EXPECT_EQ(s.slices[i].image.height, 8u);
    }
    const SliceSet again = select_slices(v, 111, 125, opt);
    for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(s.slices[i].image, again.slices[i].image);
    for (int lo : {1, 40, 200}) {
        EXPECT_EQ(select_slices(v, lo, lo + 9 <= 218 ? lo + 9 : 218, opt).slices.size(),
                  static_cast<std::size_t>((lo + 9 <= 218 ? lo + 9 : 218) - lo + 1));
    }
    EXPECT_THROW(select_slices(v, 0, 10, opt), DataError);
    EXPECT_THROW(select_slices(v, 200, 219, opt), DataError);
    EXPECT_THROW(select_slices(v, 20, 10, opt), DataError);

    const SliceStack stack = resize_all_slices(v, 8, 8);
    const SliceSet from_stack = stack.select(111, 125, true);
    for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(from_stack.slices[i].image, s.slices[i].image);
}

TEST(Slices, ConstantVolumeGivesZeroSlices) {
    const Volume v(5, 20, 5, 42.0f);
    const SliceSet s = select_slices(v, 3, 7, SliceOptions{16, 16, true});
    for (const auto& sl : s.slices)
        for (float p : sl.image.pixels) EXPECT_EQ(p, 0.0f);
    const SliceSet raw = select_slices(v, 3, 7, SliceOptions{16, 16, false});
    for (const auto& sl : raw.slices)
        for (float p : sl.image.pixels) EXPECT_EQ(p, 42.0f);
}

// ---------------------------------------------------------------------------

void expect_plan_ratios(const FoldPlan& plan, std::size_t n) {
    for (const auto& f : plan.folds) {
        const double unit = static_cast<double>(n) / 10.0;
        EXPECT_LE(std::abs(static_cast<double>(f.train.size()) - 7.0 * unit), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(f.val.size()) - 1.0 * unit), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(f.test.size()) - 2.0 * unit), 1.0);
    }
}

std::vector<SubjectInfo> synthetic_subjects(std::size_t n, std::size_t centers) {
    std::vector<SubjectInfo> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"s" + std::to_string(i), "c" + std::to_string(i % centers),
                       (i / centers) % 2 == 0 ? kControl : kPatient});
    }
    return out;
}

TEST(Folds, FiveSubjectsOneCenter) {
    const auto subjects = synthetic_subjects(5, 1);
    const FoldPlan plan = make_folds(subjects, 3);
    ASSERT_EQ(plan.folds.size(), 5u);
    for (const auto& f : plan.folds) {
        EXPECT_EQ(f.test.size(), 1u);
        EXPECT_EQ(f.val.size(), 1u);
        EXPECT_EQ(f.train.size(), 3u);
    }
    check_fold_plan(plan, subjects);
}

TEST(Folds, TwentySubjectsTwoCentersBalanced) {
    const auto subjects = synthetic_subjects(20, 2);
    std::map<std::string, SubjectInfo> by_id;
    for (const auto& s : subjects) by_id[s.id] = s;
    const FoldPlan plan = make_folds(subjects, 11);
    check_fold_plan(plan, subjects);
    for (const auto& f : plan.folds) {
        std::map<std::string, int> per_center;
        int patients = 0;
        for (const auto& id : f.test) {
            ++per_center[by_id[id].center];
            patients += by_id[id].label == kPatient;
        }
        EXPECT_EQ(per_center["c0"], 2);
        EXPECT_EQ(per_center["c1"], 2);
        EXPECT_EQ(patients, 2);
        std::set<std::string> train(f.train.begin(), f.train.end());
        for (const auto& id : f.test) EXPECT_EQ(train.count(id), 0u);
    }
}

TEST(Folds, DeterministicAndSeedSensitive) {
    const auto subjects = synthetic_subjects(30, 3);
    EXPECT_EQ(make_folds(subjects, 5).to_json(), make_folds(subjects, 5).to_json());
    EXPECT_NE(make_folds(subjects, 5).to_json(), make_folds(subjects, 6).to_json());
}

TEST(Folds, HundredSeedSweepOnFiveCenters) {
    const auto subjects = synthetic_subjects(120, 5);
    std::map<std::string, std::string> center_of;
    std::map<std::string, std::size_t> center_size;
    for (const auto& s : subjects) {
        center_of[s.id] = s.center;
        ++center_size[s.center];
    }
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const FoldPlan plan = make_folds(subjects, seed);
        check_fold_plan(plan, subjects);
        expect_plan_ratios(plan, subjects.size());
        for (const auto& f : plan.folds) {
            std::set<std::string> tr(f.train.begin(), f.train.end()), va(f.val.begin(), f.val.end());
            for (const auto& id : f.test) ASSERT_TRUE(!tr.count(id) && !va.count(id)) << "seed " << seed;
            for (const auto& id : f.val) ASSERT_FALSE(tr.count(id)) << "seed " << seed;
            std::map<std::string, std::size_t> per_center;
            for (const auto& id : f.test) ++per_center[center_of[id]];
            for (const auto& [c, size] : center_size) {
                const double share = static_cast<double>(size) / 5.0;
                EXPECT_LE(std::abs(static_cast<double>(per_center[c]) - share), 1.0) << "seed " << seed;
            }
        }
    }
}

TEST(Folds, JsonRoundTripAndErrors) {
    const auto subjects = synthetic_subjects(12, 2);
    const FoldPlan plan = make_folds(subjects, 9);
    const FoldPlan back = FoldPlan::from_json(plan.to_json());
    EXPECT_EQ(back.to_json(), plan.to_json());
    EXPECT_EQ(back.seed, 9u);
    EXPECT_THROW(FoldPlan::from_json("{not json"), FormatError);
    EXPECT_THROW(make_folds(synthetic_subjects(4, 1), 0), DataError);
    auto dup = synthetic_subjects(10, 1);
    dup[3].id = dup[4].id;
    EXPECT_THROW(make_folds(dup, 0), DataError);

    FoldPlan leaky = plan;
    leaky.folds[0].train.push_back(leaky.folds[0].test[0]);
    EXPECT_THROW(check_fold_plan(leaky, subjects), DataError);
}

// ---------------------------------------------------------------------------

PhantomOptions small_phantom() {
    PhantomOptions o;
    o.n_subjects = 4;
    o.n_centers = 2;
    o.seed = 5;
    o.extents = {48, 140, 40};
    o.column_offset = 8;
    o.column_half_width = 3;
    o.grating_period = 6;
    return o;
}

TEST(Phantom, TwoSubjectsAreOnePatientOneControl) {
    PhantomOptions o = small_phantom();
    o.n_subjects = 2;
    o.n_centers = 1;
    EXPECT_EQ(phantom_label(o, 0) + phantom_label(o, 1), kControl + kPatient);
    o.n_subjects = 3;
    EXPECT_THROW(o.validate(), DataError);
}

TEST(Phantom, LabelsBalancedPerCenter) {
    PhantomOptions o;
    std::map<std::size_t, int> patients, total;
    for (std::size_t i = 0; i < o.n_subjects; ++i) {
        ++total[phantom_center(o, i)];
        patients[phantom_center(o, i)] += phantom_label(o, i) == kPatient;
    }
    for (const auto& [c, n] : total) EXPECT_EQ(2 * patients[c], n);
}

TEST(Phantom, SignalDiffersOnlyInsideTheSlab) {
    const PhantomOptions o = small_phantom();
    std::size_t patient = 0;
    while (phantom_label(o, patient) != kPatient) ++patient;
    const Volume with = phantom_volume(o, patient, true);
    const Volume without = phantom_volume(o, patient, false);
    EXPECT_EQ(with.extents, (std::array<std::size_t, 3>{48, 140, 40}));
    std::size_t changed = 0;
    for (std::size_t z = 0; z < 40; ++z)
        for (std::size_t y = 0; y < 140; ++y)
            for (std::size_t x = 0; x < 48; ++x) {
                if (with.at(x, y, z) != without.at(x, y, z)) {
                    ++changed;
                    EXPECT_GE(static_cast<int>(y) + 1, o.slab_lo);
                    EXPECT_LE(static_cast<int>(y) + 1, o.slab_hi);
                }
            }
    EXPECT_GT(changed, 0u);
    const Volume control = phantom_volume(o, 0, true);
    ASSERT_EQ(phantom_label(o, 0), kControl);
    EXPECT_EQ(control.data, phantom_volume(o, 0, false).data);
}

TEST(Phantom, CenterGainRatioMatchesConfiguredBias) {
    PhantomOptions o = small_phantom();
    o.noise_std = 0.0;
    const Volume a = phantom_volume_at_center(o, 0, 0, true);
    const Volume b = phantom_volume_at_center(o, 0, 1, true);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a.data[i];
        sb += b.data[i];
    }
    EXPECT_NEAR(sb / sa, (1.0 + o.center_bias) / (1.0 - o.center_bias), 1e-6);
    EXPECT_NEAR(phantom_center_gain(o, 0), 0.95, 1e-12);
    EXPECT_NEAR(phantom_center_gain(o, 1), 1.05, 1e-12);
}

TEST(Phantom, DeterministicUnderSeed) {
    const PhantomOptions o = small_phantom();
    EXPECT_EQ(phantom_volume(o, 1).data, phantom_volume(o, 1).data);
    PhantomOptions other = o;
    other.seed = 6;
    EXPECT_NE(phantom_volume(o, 1).data, phantom_volume(other, 1).data);
}

TEST(Phantom, DatasetOnDiskMatchesGenerator) {
    const std::string dir = temp_path("phantom_ds");
    std::filesystem::remove_all(dir);
    const PhantomOptions o = small_phantom();
    write_phantom_dataset(o, dir);
    const Manifest m = read_manifest(dir + "/manifest.csv");
    ASSERT_EQ(m.rows.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(m.rows[i].label, phantom_label(o, i));
        EXPECT_EQ(load_volume(m.rows[i].path).data, phantom_volume(o, i).data);
    }
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sf2f
