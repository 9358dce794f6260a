#include <doctest.h>

#include <sstream>

#include "fiid/errors.hpp"
#include "fiid/tape.hpp"

using namespace fiid;

TEST_CASE("streams are pure functions of their key") {
    Tape a(7), b(7), c(8);
    CHECK(a.peek_uniform(3, "x", 5) == b.peek_uniform(3, "x", 5));
    CHECK(a.peek_uniform(3, "x", 5) != c.peek_uniform(3, "x", 5));
    CHECK(a.peek_uniform(3, "x", 5) != a.peek_uniform(3, "y", 5));
    CHECK(a.draw_uniform(1, "p") == a.peek_uniform(1, "p", 0));
    CHECK(a.draw_uniform(1, "p") == a.peek_uniform(1, "p", 1));
}

TEST_CASE("uniforms look uniform") {
    Tape t(1);
    double s = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) s += t.peek_uniform(i % 97, "u", i);
    CHECK(s / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("bit accounting counts distinct indices and enforces the cap") {
    Tape t(3);
    t.read_bit(0, "a", 4);
    t.read_bit(0, "a", 4);
    t.draw_bits(0, "b", 3);
    CHECK(t.bits_used(0) == 4);
    t.set_bit_cap(5);
    t.read_bit(0, "a", 9);
    CHECK_THROWS_AS(t.read_bit(0, "a", 10), BudgetExceeded);
    std::ostringstream os;
    t.write_usage_csv(os);
    CHECK(os.str().rfind("vertex,phase,bits_used,uniforms_used\n", 0) == 0);
}

TEST_CASE("perturbed tapes agree inside the kept set only") {
    Tape base(11);
    Tape p(base, {0, 2}, 99);
    CHECK(p.peek_uniform(0, "z", 1) == base.peek_uniform(0, "z", 1));
    CHECK(p.peek_uniform(1, "z", 1) != base.peek_uniform(1, "z", 1));
}

TEST_CASE("views record reads outside the allowed set") {
    Tape t(5);
    TapeView v(t, "cell", {1, 2});
    v.uniform(1);
    CHECK(t.locality_violations() == 0);
    v.uniform(3);
    CHECK(t.locality_violations() == 1);
    CHECK(t.violation_samples().size() == 1);
}
