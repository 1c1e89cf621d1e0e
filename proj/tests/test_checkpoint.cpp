#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prnmt/checkpoint.hpp"
#include "tmpdir.hpp"
#include "toy.hpp"

using namespace prnmt;

TEST_CASE("checkpoints round-trip bit for bit") {
    toy::TempDir dir("ckpt");
    const ModelParams p = toy::sharp_params(toy::tiny_config(9, 7), 3);
    save_checkpoint(dir.file("m.ckpt"), p);
    const ModelParams q = load_checkpoint(dir.file("m.ckpt"));
    CHECK(q == p);
    CHECK(q.config == p.config);
    CHECK(serialize_params(q) == toy::read_file(dir.file("m.ckpt")));
}

TEST_CASE("corrupted checkpoints are rejected") {
    const ModelParams p = toy::sharp_params(toy::tiny_config(6, 6), 1);
    const std::string bytes = serialize_params(p);
    CHECK(deserialize_params(bytes) == p);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    CHECK_THROWS(deserialize_params(flipped));

    CHECK_THROWS(deserialize_params(bytes.substr(0, bytes.size() - 3)));
    CHECK_THROWS(deserialize_params(bytes + "x"));

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS(deserialize_params(magic));
    CHECK_THROWS(load_checkpoint("/nonexistent/model.ckpt"));
}

TEST_CASE("the header stores the little-endian magic and version") {
    const std::string bytes = serialize_params(init_params(toy::tiny_config(5, 5), {1}));
    CHECK(bytes.substr(0, 8) == "PRNMTCKP");
    CHECK(static_cast<unsigned char>(bytes[8]) == kCheckpointVersion);
    CHECK(bytes[9] == 0);
}
