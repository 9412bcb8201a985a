#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/exemplar.hpp"
#include "wsciss/image_io.hpp"
#include "wsciss/pseudo_label.hpp"

using namespace wsciss;

namespace {

using Parts = std::vector<std::vector<std::string>>;

TaskSchedule abc() { return TaskSchedule(Parts{{"A", "B"}, {"C"}}); }

TrainSample blank(int h, int w, const std::string& id, double v = 0.25) {
    return {Image(Tensor3(3, h, w, v), id), ImageLevelLabels(), HardLabelMap(h, w)};
}

ExemplarItem make_item(Rng& rng, int cls, int h, int w) {
    ExemplarItem it;
    it.class_index = cls;
    it.crop = io::quantize_8bit(Image(testutil::random_tensor(rng, 3, h, w, 0.0, 1.0), "crop"));
    it.crop_mask = HardLabelMap(h, w, 1);
    it.crop_mask(0, 0) = 0;
    it.source_sample_id = "src";
    it.box = {0, 0, h, w};
    return it;
}

}  // namespace

TEST(Components, FourConnectivity) {
    // Diagonal neighbours are separate components.
    const HardLabelMap m(3, 3, {1, 0, 0, 0, 1, 1, 0, 0, 1});
    const auto comps = connected_components(m, 1);
    ASSERT_EQ(comps.size(), 2u);
    EXPECT_EQ(comps[0].box, (Box{0, 0, 1, 1}));
    EXPECT_EQ(comps[1].box, (Box{1, 1, 2, 2}));
    EXPECT_EQ(comps[1].pixels.size(), 3u);
}

TEST(BuildExemplars, SingleObjectGivesOneItem) {
    TrainSample s = blank(12, 12, "one");
    HardLabelMap hard(12, 12);
    for (int y = 3; y < 8; ++y) {
        for (int x = 4; x < 9; ++x) hard(y, x) = 1;
    }
    const Dataset d({s});
    const auto r = build_exemplar_set(d, {hard}, abc(), 1, 50, 16, 0);
    ASSERT_EQ(r.set.items(1).size(), 1u);
    const ExemplarItem& it = r.set.items(1)[0];
    EXPECT_EQ(it.box, (Box{3, 4, 5, 5}));
    EXPECT_EQ(it.crop.height(), 5);
    EXPECT_EQ(it.source_sample_id, "one");
    EXPECT_TRUE(r.set.items(2).empty());
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("'B'"), std::string::npos);
}

TEST(BuildExemplars, SmallComponentsSkipped) {
    HardLabelMap hard(6, 6);
    hard(0, 0) = hard(0, 1) = 1;
    const auto r = build_exemplar_set(Dataset({blank(6, 6, "s")}), {hard}, abc(), 1, 50, 16, 0);
    EXPECT_TRUE(r.set.empty());
}

TEST(BuildExemplars, BudgetSelectionIsSeededSampleOfCandidates) {
    // 100 images, one 4x4 object of class 1 each: 100 candidates in order.
    std::vector<TrainSample> samples;
    std::vector<HardLabelMap> hard;
    for (int i = 0; i < 100; ++i) {
        samples.push_back(blank(8, 8, "s" + std::to_string(i)));
        HardLabelMap h(8, 8);
        for (int y = 2; y < 6; ++y) {
            for (int x = 2; x < 6; ++x) h(y, x) = 1;
        }
        hard.push_back(h);
    }
    const Dataset d(samples);
    const auto a = build_exemplar_set(d, hard, abc(), 1, 50, 16, 42);
    const auto b = build_exemplar_set(d, hard, abc(), 1, 50, 16, 42);
    const auto c = build_exemplar_set(d, hard, abc(), 1, 50, 16, 43);
    auto ids = [](const ExemplarSet& s) {
        std::set<std::string> out;
        for (const auto& it : s.items(1)) out.insert(it.source_sample_id);
        return out;
    };
    EXPECT_EQ(ids(a.set).size(), 50u);
    EXPECT_EQ(ids(a.set), ids(b.set));
    EXPECT_NE(ids(a.set), ids(c.set));

    // Reference: partial Fisher-Yates over candidate positions with the
    // per-class seed.
    Rng ref(mix_seed(42, 1));
    std::vector<int> pool(100);
    for (int i = 0; i < 100; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::set<std::string> expected;
    for (std::size_t i = 0; i < 50; ++i) {
        std::swap(pool[i], pool[i + ref.index(100 - i)]);
        expected.insert("s" + std::to_string(pool[i]));
    }
    EXPECT_EQ(ids(a.set), expected);
}

TEST(BuildExemplars, CarryOverPoolsPreviousItems) {
    Rng rng(1);
    ExemplarSet prev(3);
    for (int i = 0; i < 3; ++i) prev.add(make_item(rng, 1, 4, 4));
    HardLabelMap hard(8, 8);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) hard(y, x) = 3;
    }
    const auto r = build_exemplar_set(Dataset({blank(8, 8, "new")}), {hard}, abc(), 2, 3, 16, 0, &prev);
    EXPECT_EQ(r.set.items(1).size(), 3u);
    EXPECT_EQ(r.set.items(3).size(), 1u);
    EXPECT_NO_THROW(r.set.validate(4));
    EXPECT_THROW(r.set.validate(3), ValidationError);
}

TEST(BuildExemplars, InvalidArguments) {
    EXPECT_THROW(build_exemplar_set(Dataset({blank(4, 4, "s")}), {}, abc(), 1, 5, 16, 0), ValidationError);
    EXPECT_THROW(build_exemplar_set(Dataset({blank(4, 4, "s")}), {HardLabelMap(4, 4)}, abc(), 1, 0, 16, 0),
                 ValidationError);
}

TEST(ExemplarSetTest, BudgetEnforced) {
    Rng rng(2);
    ExemplarSet s(1);
    s.add(make_item(rng, 1, 3, 3));
    EXPECT_ANY_THROW(s.add(make_item(rng, 1, 3, 3)));
    EXPECT_NO_THROW(s.add(make_item(rng, 2, 3, 3)));
    EXPECT_EQ(s.total(), 2u);
}

TEST(Editor, HardBlendCopiesMaskedCropOnly) {
    Rng rng(3);
    const ExemplarItem it = make_item(rng, 1, 5, 6);
    const Image scene(Tensor3(3, 12, 12, 0.1), "scene");
    const Region r{2, 3, 5, 6};
    const Image out = MaskedBlendEditor(1.0, 0.0).edit(scene, r, it);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            const bool inside = r.contains(y, x) && it.crop_mask(y - r.y0, x - r.x0) == 1;
            for (int c = 0; c < 3; ++c) {
                const double expect = inside ? it.crop.pixels()(c, y - r.y0, x - r.x0) : 0.1;
                EXPECT_DOUBLE_EQ(out.pixels()(c, y, x), expect);
            }
        }
    }
}

TEST(Editor, EditsStayWithinFeatherMargin) {
    Rng rng(4);
    for (double feather : {0.0, 0.7, 1.5}) {
        const MaskedBlendEditor ed(0.8, feather);
        for (int trial = 0; trial < 20; ++trial) {
            const ExemplarItem it = make_item(rng, 2, 3 + static_cast<int>(rng.index(6)), 3 + static_cast<int>(rng.index(6)));
            const Image scene(testutil::random_tensor(rng, 3, 20, 20, 0.0, 1.0), "s");
            const Region r = random_region(20, 20, it, {}, rng);
            const Image out = ed.edit(scene, r, it);
            const int m = ed.feather_margin();
            for (int y = 0; y < 20; ++y) {
                for (int x = 0; x < 20; ++x) {
                    const bool near = y >= r.y0 - m && y < r.y0 + r.height + m && x >= r.x0 - m && x < r.x0 + r.width + m;
                    if (near) continue;
                    for (int c = 0; c < 3; ++c) ASSERT_EQ(out.pixels()(c, y, x), scene.pixels()(c, y, x));
                }
            }
        }
    }
}

TEST(Editor, RegionOutsideImageRejected) {
    Rng rng(5);
    const ExemplarItem it = make_item(rng, 1, 3, 3);
    EXPECT_THROW(MaskedBlendEditor().edit(Image(Tensor3(3, 5, 5), "s"), Region{3, 3, 4, 4}, it), ValidationError);
    EXPECT_THROW(MaskedBlendEditor(1.5, 1.0), ConfigError);
}

TEST(Editor, ExternalCommandRoundTrip) {
    Rng rng(6);
    const auto dir = testutil::scratch("ext_editor");
    const ExemplarItem it = make_item(rng, 1, 3, 3);
    const Image scene = io::quantize_8bit(Image(testutil::random_tensor(rng, 3, 8, 8, 0.0, 1.0), "s"));
    // Identity editor: copies the scene to the output path.
    const SubprocessEditor copy("sh -c 'cp \"$1\" \"$4\"' editor", dir, 0);
    EXPECT_EQ(copy.edit(scene, Region{1, 1, 3, 3}, it).pixels(), scene.pixels());
    // Editor reporting a different output path on stdout.
    const SubprocessEditor moved("sh -c 'cp \"$1\" \"$4.alt.png\"; echo \"$4.alt.png\"' editor", dir, 0);
    EXPECT_EQ(moved.edit(scene, Region{1, 1, 3, 3}, it).pixels(), scene.pixels());
    const SubprocessEditor failing("false", dir, 0);
    EXPECT_THROW(failing.edit(scene, Region{1, 1, 3, 3}, it), IoError);
}

TEST(Augment, EmptySetIsNoOp) {
    const TrainSample s = blank(8, 8, "s");
    Rng rng(7);
    const auto r = augment(s, ExemplarSet(5), MaskedBlendEditor(), rng);
    EXPECT_FALSE(r.applied);
    EXPECT_EQ(r.sample.image, s.image);
}

TEST(Augment, WeakLabelsGainExemplarClass) {
    // Scene showing "sofa" (3) plus a "person" (1) exemplar.
    const TaskSchedule sched(Parts{{"person", "cat"}, {"sofa"}});
    TrainSample s = blank(16, 16, "scene");
    s.weak_labels = ImageLevelLabels({3});
    Rng rng(8);
    ExemplarSet set(5);
    set.add(make_item(rng, 1, 4, 4));
    const auto r = augment(s, set, MaskedBlendEditor(), rng);
    ASSERT_TRUE(r.applied);
    EXPECT_EQ(r.exemplar_class, 1);
    EXPECT_EQ(prompt_names(r.sample.weak_labels.classes(), sched), (std::vector<std::string>{"person", "sofa"}));
    EXPECT_EQ(r.sample.id(), "scene+aug");
    // Hidden mask marks the pasted object.
    const HardLabelMap pasted = paste_mask(set.items(1)[0], r.region, 16, 16);
    for (int i = 0; i < 256; ++i) EXPECT_EQ((*r.sample.hidden_mask)[i], pasted[i] == 1 ? 1 : 0);
}

TEST(Augment, ApplicationRateMatchesProbability) {
    Rng rng(9);
    ExemplarSet set(5);
    set.add(make_item(rng, 1, 4, 4));
    const TrainSample s = blank(16, 16, "s");
    const MaskedBlendEditor ed;
    for (double p : {0.2, 0.5, 0.8}) {
        int applied = 0;
        for (int i = 0; i < 1000; ++i) {
            if (!rng.bernoulli(p)) continue;
            applied += augment(s, set, ed, rng).applied;
        }
        EXPECT_NEAR(applied / 1000.0, p, 0.03);
    }
}

TEST(Augment, RegionFollowsCropAspectAndScale) {
    Rng rng(10);
    const ExemplarItem wide = make_item(rng, 1, 4, 8);
    for (int i = 0; i < 200; ++i) {
        const Region r = random_region(40, 40, wide, {0.2, 0.5}, rng);
        EXPECT_GE(r.y0, 0);
        EXPECT_GE(r.x0, 0);
        EXPECT_LE(r.y0 + r.height, 40);
        EXPECT_LE(r.x0 + r.width, 40);
        EXPECT_LE(r.width, 20);
        EXPECT_LE(r.height, r.width + 1);
    }
}

TEST(ExemplarStore, SaveLoadRoundTrip) {
    Rng rng(11);
    const auto dir = testutil::scratch("exemplars");
    ExemplarSet set(4);
    set.add(make_item(rng, 1, 4, 5));
    set.add(make_item(rng, 1, 3, 3));
    set.add(make_item(rng, 3, 6, 2));
    save_exemplar_set(dir, set, abc());
    const ExemplarSet back = load_exemplar_set(dir, abc(), 4);
    ASSERT_EQ(back.classes(), set.classes());
    for (int c : set.classes()) {
        ASSERT_EQ(back.items(c).size(), set.items(c).size());
        for (std::size_t k = 0; k < set.items(c).size(); ++k) {
            EXPECT_EQ(back.items(c)[k].crop.pixels(), set.items(c)[k].crop.pixels());
            EXPECT_EQ(back.items(c)[k].crop_mask, set.items(c)[k].crop_mask);
            EXPECT_EQ(back.items(c)[k].box, set.items(c)[k].box);
            EXPECT_EQ(back.items(c)[k].source_sample_id, set.items(c)[k].source_sample_id);
        }
    }
}
