#include <doctest.h>

#include "helpers.hpp"
#include "matsim/checkpoint.hpp"
#include "matsim/errors.hpp"

using namespace matsim;

TEST_CASE("checkpoint round trip stores float32 parameters") {
    testing::TempDir dir;
    const auto model = EncoderModel::initialize({5, 7, 3}, 4, 6);
    CheckpointInfo info;
    info.seed = 4;
    info.epoch = 12;
    info.loss.weight_ce = 0.5;
    write_checkpoint(dir / "a.ckpt", model, info);
    const auto loaded = read_checkpoint(dir / "a.ckpt");
    CHECK(loaded.model.layer_dims() == model.layer_dims());
    CHECK(loaded.model.n_classes() == 6);
    CHECK(loaded.info.seed == 4);
    CHECK(loaded.info.epoch == 12);
    CHECK(loaded.info.loss.weight_ce == 0.5);
    const Vector expected = model.parameters().cast<float>().cast<double>();
    CHECK(loaded.model.parameters() == expected);

    write_checkpoint(dir / "b.ckpt", loaded.model, loaded.info);
    CHECK(testing::read_text(dir / "a.ckpt") == testing::read_text(dir / "b.ckpt"));
}

TEST_CASE("checkpoint header is one JSON line") {
    testing::TempDir dir;
    write_checkpoint(dir / "c.ckpt", EncoderModel::initialize({2, 3}, 1), {});
    const auto text = testing::read_text(dir / "c.ckpt");
    const auto header = text.substr(0, text.find('\n'));
    CHECK(header.find("\"layer_dims\":[2,3]") != std::string::npos);
    CHECK(header.find("relu") != std::string::npos);
}

TEST_CASE("bad checkpoints are rejected") {
    testing::TempDir dir;
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), ValidationError);
    testing::write_text(dir / "empty.ckpt", "");
    CHECK_THROWS_AS(read_checkpoint(dir / "empty.ckpt"), ValidationError);
    write_checkpoint(dir / "ok.ckpt", EncoderModel::initialize({4, 4}, 1), {});
    const auto text = testing::read_text(dir / "ok.ckpt");
    testing::write_text(dir / "cut.ckpt", text.substr(0, text.size() - 9));
    CHECK_THROWS_AS(read_checkpoint(dir / "cut.ckpt"), ValidationError);
}
