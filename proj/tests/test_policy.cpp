#include <doctest.h>

#include <algorithm>

#include "grapecm/policy.hpp"
#include "grapecm/rng.hpp"
#include "test_support.hpp"

using namespace grapecm;
using test::fault_ctx;
using test::sample_preset;

namespace {

bool has_violation(const std::vector<std::string>& violations,
                   const std::string& needle) {
  return std::any_of(violations.begin(), violations.end(),
                     [&needle](const std::string& v) {
                       return v.find(needle) != std::string::npos;
                     });
}

}  // namespace

TEST_CASE("validate_preset accepts the sample preset") {
  CHECK(validate_preset(sample_preset()).empty());
}

TEST_CASE("validate_preset flags max_cpu out of range") {
  PresetPolicy p = sample_preset();
  p.page_compaction.max_cpu = 0.0;
  CHECK(has_violation(validate_preset(p), "max_cpu out of range"));

  p = sample_preset();
  p.page_zeroing.max_cpu = 1.5;
  CHECK(has_violation(validate_preset(p), "max_cpu out of range"));
}

TEST_CASE("validate_preset flags non-canonical exceptions") {
  PresetPolicy p = sample_preset();
  p.mem_alloc_exceptions["web-frontend"] = PagingMode::kDemandPaging;  // == default
  CHECK(has_violation(validate_preset(p), "non-canonical exception"));
}

TEST_CASE("validate_preset flags non-positive intervals") {
  PresetPolicy p = sample_preset();
  p.page_zeroing.interval_s = 0.0;
  CHECK(has_violation(validate_preset(p), "interval out of range"));
}

TEST_CASE("validate_preset flags unsorted promotion regions") {
  PresetPolicy p = sample_preset();
  p.use_huge_pages["memcached"] = {{2048, 8}, {512, 8}};
  CHECK(has_violation(validate_preset(p), "not sorted/disjoint"));
}

TEST_CASE("validate_preset enforces the address space bound") {
  PresetPolicy p = sample_preset();
  CHECK(validate_preset(p, 4096).empty());
  p.use_huge_pages["vid-encoder"] = {{4090, 16}};
  CHECK(has_violation(validate_preset(p, 4096), "exceeds address space"));
}

TEST_CASE("page fault in a listed region allocates a huge page") {
  PresetPolicy p = sample_preset();
  Decision d = evaluate(p, {}, fault_ctx("memcached", 514));
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocHugePage);

  // Outside every listed region: base page.
  d = evaluate(p, {}, fault_ctx("memcached", 100));
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocBasePage);

  // Process with no list at all: base page.
  d = evaluate(p, {}, fault_ctx("batch-job", 514));
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocBasePage);
}

TEST_CASE("cow-break with unspecified mode falls back to the CM") {
  PresetPolicy p = sample_preset();
  DecisionContext ctx = fault_ctx("memcached", 514);
  ctx.decision_point = DecisionPoint::kCowBreak;
  Decision d = evaluate(p, {}, ctx);
  REQUIRE(is_fallback(d));
  CHECK(std::get<Fallback>(d).reason == "unspecified");

  // The exception carries its own definite answer.
  ctx.process = "redis-snapshot";
  d = evaluate(p, {}, ctx);
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocBasePage);
}

TEST_CASE("malformed contexts fall back with bad-context") {
  PresetPolicy p = sample_preset();

  DecisionContext ctx = fault_ctx("memcached", 514);
  ctx.faulting_region.reset();  // required for page-fault
  Decision d = evaluate(p, {}, ctx);
  REQUIRE(is_fallback(d));
  CHECK(std::get<Fallback>(d).reason == "bad-context");

  ctx = fault_ctx("memcached", 514);
  ctx.decision_point = DecisionPoint::kOom;  // must not carry a region
  d = evaluate(p, {}, ctx);
  REQUIRE(is_fallback(d));
  CHECK(std::get<Fallback>(d).reason == "bad-context");
}

TEST_CASE("suspend-huge-pages overlay forces base pages") {
  PresetPolicy p = sample_preset();
  PresetModification suspend;
  suspend.ttl_s = 3600.0;
  suspend.overlay.use_huge_pages.emplace();  // empty map: nothing promoted

  auto mods = apply_modification(p, {}, suspend, 0);
  REQUIRE(mods.ok());

  Decision d = evaluate(p, mods.value(), fault_ctx("memcached", 514, 10));
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocBasePage);
}

TEST_CASE("modification expiry is closed-open") {
  PresetPolicy p = sample_preset();
  PresetModification suspend;
  suspend.ttl_s = 3600.0;
  suspend.overlay.use_huge_pages.emplace();

  auto mods = apply_modification(p, {}, suspend, 0);
  REQUIRE(mods.ok());

  // t = 3599s: overlay still in effect.
  Decision d = evaluate(p, mods.value(),
                        fault_ctx("memcached", 514, seconds_to_micros(3599)));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocBasePage);

  // t = 3600s: base preset restored exactly.
  d = evaluate(p, mods.value(),
               fault_ctx("memcached", 514, seconds_to_micros(3600)));
  CHECK(std::get<Action>(d).kind == ActionKind::kAllocHugePage);
}

TEST_CASE("most recently applied overlay wins") {
  PresetPolicy p = sample_preset();
  p.mem_reclaim = ReclaimMode::kOff;

  PresetModification on;
  on.ttl_s = 100.0;
  on.overlay.mem_reclaim = ReclaimMode::kOn;
  PresetModification off;
  off.ttl_s = 100.0;
  off.overlay.mem_reclaim = ReclaimMode::kOff;

  auto mods = apply_modification(p, {}, on, seconds_to_micros(1));
  REQUIRE(mods.ok());
  mods = apply_modification(p, mods.value(), off, seconds_to_micros(2));
  REQUIRE(mods.ok());

  DecisionContext ctx;
  ctx.decision_point = DecisionPoint::kReclaimTick;
  ctx.process = "kswapd";
  ctx.virtual_time = seconds_to_micros(3);
  Decision d = evaluate(p, mods.value(), ctx);
  REQUIRE(is_action(d));
  CHECK(std::get<Action>(d).kind == ActionKind::kSkipTask);
}

TEST_CASE("reclaim overlay with a victim yields reclaim-from") {
  PresetPolicy p = sample_preset();
  PresetModification m;
  m.ttl_s = 3600.0;
  m.overlay.mem_reclaim = ReclaimMode::kOn;
  m.overlay.reclaim_source = ReclaimSource{"batch-job", AddressRegion{512, 256}};

  auto mods = apply_modification(p, {}, m, 0);
  REQUIRE(mods.ok());

  DecisionContext ctx;
  ctx.decision_point = DecisionPoint::kReclaimTick;
  ctx.process = "kswapd";
  ctx.virtual_time = seconds_to_micros(10);
  Decision d = evaluate(p, mods.value(), ctx);
  REQUIRE(is_action(d));
  const Action& a = std::get<Action>(d);
  CHECK(a.kind == ActionKind::kReclaimFrom);
  CHECK(a.process == "batch-job");
  REQUIRE(a.region.has_value());
  CHECK(a.region->start == 512);
}

TEST_CASE("apply_modification rejects non-positive ttl") {
  PresetModification m;
  m.ttl_s = 0.0;
  CHECK_FALSE(apply_modification(sample_preset(), {}, m, 0).ok());
}

TEST_CASE("property: evaluate is total and deterministic") {
  Rng rng(42);
  for (int i = 0; i < 2000; ++i) {
    PresetPolicy p = test::random_preset(rng);
    DecisionContext ctx = test::random_ctx(rng);
    Decision a = evaluate(p, {}, ctx);
    Decision b = evaluate(p, {}, ctx);
    CHECK(a == b);  // deterministic; also proves no crash on any input
  }
}

TEST_CASE("property: expired modification equals never applied") {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    PresetPolicy p = test::random_preset(rng);
    PresetModification m;
    m.ttl_s = 1.0 + rng.next_double() * 100.0;
    if (rng.next_double() < 0.5) m.overlay.use_huge_pages.emplace();
    m.overlay.mem_reclaim = ReclaimMode::kOn;

    micros_t applied = static_cast<micros_t>(rng.uniform_index(1'000'000));
    auto mods = apply_modification(p, {}, m, applied);
    REQUIRE(mods.ok());

    DecisionContext ctx = test::random_ctx(rng);
    ctx.virtual_time =
        applied + seconds_to_micros(m.ttl_s) + static_cast<micros_t>(rng.uniform_index(1000));
    CHECK(evaluate(p, mods.value(), ctx) == evaluate(p, {}, ctx));
  }
}

TEST_CASE("property: exception shields a process from the default") {
  Rng rng(99);
  for (int i = 0; i < 500; ++i) {
    PresetPolicy p = test::random_preset(rng);
    p.mem_alloc_default = PagingMode::kDemandPaging;
    p.mem_alloc_exceptions["memcached"] = PagingMode::kEager;

    DecisionContext ctx;
    ctx.decision_point = DecisionPoint::kMemAlloc;
    ctx.process = "memcached";
    ctx.faulting_region = AddressRegion{rng.uniform_index(4096), 1};
    ctx.virtual_time = static_cast<micros_t>(rng.uniform_index(1'000'000));

    Decision with_demand_default = evaluate(p, {}, ctx);

    // Flipping the default must not change the excepted process's action.
    p.mem_alloc_default = PagingMode::kEager;
    p.mem_alloc_exceptions["memcached"] = PagingMode::kDemandPaging;
    Decision with_eager_default = evaluate(p, {}, ctx);

    CHECK(std::get<Action>(with_demand_default).kind == ActionKind::kAllocEager);
    CHECK(std::get<Action>(with_eager_default).kind == ActionKind::kAllocBasePage);
  }
}
