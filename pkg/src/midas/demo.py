"""Bundled demo session: a fully scripted waste-segregation run.

The transcript and embedding map are constructed so the funnel lands on exact
per-agent counts (muse 8, forge 75, gatekeeper 32, librarian 10, challenger
11, mint 20, scout 400, navigator 13, sentinel 24, director 22, leo 20).

Geometry: every semantic "position" is built from an exact orthonormal basis.
Known solutions sit on basis vectors. Ideas that must fail the global-novelty
check sit at cosine 0.86 from a known solution (three per solution, spread
120 degrees apart in a dedicated 2-plane so they stay mutually distinct for
the local filter). Clean survivors and navigator syntheses sit on their own
basis vectors. Duplicate copies of a position share its exact vector, so the
local filter collapses them to one representative each round.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .engine import Engine
from .model import Override, SessionConfig
from .orchestrator import HumanApproval
from .persistence import SessionStore
from .providers import ScriptedEmbedder, ScriptedTranscript, scripted_provider_set

DIM = 64
KILL_COS = 0.86  # similarity to the colliding known solution (>= 0.85 threshold)

PS1_PROBLEM = (
    "Households struggle to segregate everyday waste into recyclable, organic "
    "and reject streams. Bins overflow, categories get mixed, and families "
    "lose motivation because sorting is tedious and error-prone. A product is "
    "needed that makes correct segregation effortless at the moment of "
    "disposal, without demanding extra time, space, or expertise."
)

PS1_AI3C = {
    "activity": "Segregating household waste into correct streams at the moment of disposal",
    "item": "Household members disposing of mixed recyclable, organic and reject waste",
    "contradiction": (
        "Correct segregation demands attention and knowledge at every disposal, "
        "but disposal is a habitual two-second action nobody wants to slow down"
    ),
    "criteria": [
        "Sorting accuracy improves without slowing disposal",
        "Works for all household members including children",
        "Sustains motivation over months of use",
    ],
    "constraints": [
        "Fits ordinary kitchens without rebuilding",
        "Affordable for a middle-income household",
        "Hygienic and easy to clean",
    ],
}

# (title, action, object, context) for each known solution, plus a source link.
LITERATURE = [
    ("Smart Vision Sorting Bin", "Classifies and routes waste using a lid camera",
     "Camera-equipped sorting bin", "Kitchen bin that photographs each item and opens the right compartment",
     "https://products.example.org/smart-vision-sorting-bin"),
    ("Color-Coded Bin Trio", "Separates streams through labeled color-coded bins",
     "Set of three color-coded bins", "Classic household segregation station with pictogram labels",
     "https://products.example.org/color-coded-bin-trio"),
    ("Rotating Compost Tumbler", "Accelerates composting by tumbling organic waste",
     "Sealed rotating compost drum", "Backyard drum that turns kitchen organics into compost",
     "https://products.example.org/rotating-compost-tumbler"),
    ("Reverse Vending Machine", "Refunds deposits for returned containers",
     "Bottle and can return machine", "Supermarket machine paying out deposits for empties",
     "https://products.example.org/reverse-vending-machine"),
    ("Compacting Recycler Bin", "Compresses recyclables to save collection space",
     "Pedal-driven compactor bin", "Bin that crushes cartons and bottles to a third of their volume",
     "https://products.example.org/compacting-recycler-bin"),
    ("RFID Waste Tag Kit", "Tracks household bags through tagged collection",
     "RFID bag tags and reader", "Municipal kit that attributes collected bags to households",
     "https://products.example.org/rfid-waste-tag-kit"),
    ("Sink Organics Grinder", "Grinds food scraps directly at the sink drain",
     "Under-sink waste disposer", "Grinder unit diverting organics away from the reject stream",
     "https://products.example.org/sink-organics-grinder"),
    ("Community Recycling Kiosk", "Collects sorted recyclables at neighborhood kiosks",
     "Shared drop-off kiosk", "Staffed kiosk rewarding correctly sorted drop-offs",
     "https://products.example.org/community-recycling-kiosk"),
    ("Optical Sorting Conveyor", "Separates mixed waste with optical sensors",
     "Industrial optical sorter", "Facility conveyor that picks recyclables from mixed input",
     "https://products.example.org/optical-sorting-conveyor"),
    ("Deposit Return App", "Gamifies container returns with digital deposits",
     "Smartphone deposit app", "App crediting users for scanned and returned containers",
     "https://products.example.org/deposit-return-app"),
]

# Raw-pool positions 0..20 collide with known solutions 0..6 (three each);
# positions 21..31 are the clean, globally novel survivors.
KILL_STEMS = [
    # around the smart vision bin
    ("AI Lid Classifier", "Photographs items and signals the right bin", "Camera lid module",
     "Retrofit lid that recognizes waste as the hand approaches"),
    ("Snapshot Sorter Cam", "Identifies waste type from a quick snapshot", "Clip-on bin camera",
     "Small camera that flashes a color cue for the correct stream"),
    ("Vision Bin Butler", "Routes each item by on-device image recognition", "Vision-guided bin gate",
     "Bin insert that flips items toward the recognized compartment"),
    # around the color-coded trio
    ("Pictogram Bin Rack", "Guides sorting with large pictogram labels", "Labeled bin rack",
     "Rack of labeled bins with icons readable by children"),
    ("Color Stream Caddies", "Separates streams by bright color-coded caddies", "Stacked color caddies",
     "Stackable caddies in standard segregation colors"),
    ("Chromatic Sort Station", "Distinguishes streams through colored apertures", "Color-aperture station",
     "Station whose openings are shaped and colored per stream"),
    # around the compost tumbler
    ("Kitchen Mini Tumbler", "Composts scraps in a countertop tumbler", "Countertop compost drum",
     "Small rotating drum composting daily kitchen organics"),
    ("Crank Compost Barrel", "Breaks down organics with a hand-cranked barrel", "Hand-cranked barrel",
     "Balcony barrel cranked daily to aerate compost"),
    ("Tumble Bin Composter", "Turns organic waste by tumbling on a stand", "Tumbling compost bin",
     "Stand-mounted bin rotated to speed decomposition"),
    # around the reverse vending machine
    ("Home Deposit Console", "Refunds deposits for containers fed at home", "Household return console",
     "Hallway console crediting deposits for inserted empties"),
    ("Bottle Refund Chute", "Pays back deposits through a building chute", "Shared refund chute",
     "Apartment chute that counts and credits returned bottles"),
    ("Can Return Carousel", "Collects and refunds cans via a rotating drum", "Can return carousel",
     "Lobby carousel accepting cans against deposit credit"),
    # around the compacting recycler
    ("Foot Press Crusher", "Compresses cartons with a foot press", "Pedal carton press",
     "Pedal press flattening cartons before binning"),
    ("Twist Compactor Lid", "Crushes bottles with a twisting lid", "Twist-compression lid",
     "Screw-down lid compacting bottles inside the bin"),
    ("Squeeze Stack Bin", "Reduces volume by squeezing stacked recyclables", "Lever squeeze bin",
     "Lever-operated bin squeezing the recyclable stack"),
    # around the RFID tag kit
    ("Chip Tagged Liners", "Attributes bags through chipped liners", "RFID bin liners",
     "Liners whose chips log which household sorted the bag"),
    ("Smart Bag Seals", "Tracks sorted bags with smart seals", "NFC bag seals",
     "Seals scanned at pickup to credit correct sorting"),
    ("Tag and Trace Clips", "Traces waste bags via tag clips", "Traceable bag clips",
     "Clips pairing bags to the family's sorting record"),
    # around the sink grinder
    ("Drain Scrap Mill", "Mills food scraps at the drain", "Inline drain mill",
     "Compact mill diverting sink scraps to an organics canister"),
    ("Sink Side Digester", "Digests organics beside the sink", "Counter digester pod",
     "Sealed pod digesting scraps fed from the sink strainer"),
    ("Under-Sink Organics Unit", "Processes food waste under the sink", "Under-sink processor",
     "Processor macerating scraps into a sealed organics tank"),
]

CLEAN_STEMS = [
    ("Odor-Cue Sorting Strips", "Signals the correct stream by safe scent cues", "Scented indicator strips",
     "Strips near the bin release a distinct safe scent per stream, training habit by smell"),
    ("Family Sorting Ledger", "Motivates correct sorting through a shared ledger game", "Magnetic ledger board",
     "Fridge board where each member logs streaks; the bin confirms entries with a stamp"),
    ("Dissolvable Category Liners", "Separates organics in liners that dissolve in compost", "Starch-film liners",
     "Color-printed starch liners that vanish during composting, leaving streams clean"),
    ("Magnetic Caddy Rail", "Repositions stream caddies along a magnetic rail", "Rail-mounted caddies",
     "Caddies slide to wherever cooking happens, so the right bin is always in reach"),
    ("Neighborhood Swap Shelf", "Diverts reusable rejects to a shared swap shelf", "Stairwell swap shelf",
     "Shelf intercepting usable items before they enter the reject stream"),
    ("Weight-Sense Shelf Bins", "Flags mis-sorted items by weight signature", "Load-cell shelf bins",
     "Shelf bins that blink when a deposit's weight contradicts the chosen stream"),
    ("Foldable Balcony Sort Wall", "Expands sorting capacity on a folding wall", "Fold-out wall panel",
     "Balcony panel unfolding into hanging stream pouches on collection eve"),
    ("Sound-Cue Disposal Coach", "Coaches disposal with distinct confirmation sounds", "Acoustic bin module",
     "Module playing a per-stream chime so children learn sorting by ear"),
    ("Under-Sink Carousel", "Rotates stream compartments under the sink", "Rotating compartment carousel",
     "Carousel presenting the needed compartment through one small door"),
    ("Biodegradable Color Tokens", "Rewards correct sorting with plantable tokens", "Seed-paper tokens",
     "Bin dispenses seed tokens children plant, tying sorting to visible growth"),
    ("Sorting Night-Light Projector", "Projects stream zones onto the bin area", "Micro projector ring",
     "Ring projecting colored zones so late-night disposal stays accurate"),
]

NAV_STEMS = [
    ("Adaptive Stream Funnel", "Transforms one opening into the correct stream path", "Shape-shifting funnel",
     "A single funnel mouth that reconfigures per detected item class"),
    ("Habit Anchor Mat", "Anchors sorting into an existing habit loop", "Pressure-sensing floor mat",
     "Mat in front of the bin confirms the stream chosen by foot position"),
    ("Modular Stream Pods", "Recombines stream pods to match weekly waste mix", "Snap-together pods",
     "Pods resize per stream as the household's waste profile shifts"),
    ("Compost Progress Window", "Reveals decomposition progress to sustain motivation", "Transparent compost column",
     "Column showing organics turning to soil, rewarding correct feeding"),
    ("Stream Color Projection Lid", "Projects the target stream color onto the item", "Projection lid ring",
     "Lid ring tinting the held item with its stream color before release"),
    ("Reject Shrink Chamber", "Shrinks reject volume to expose over-rejecting", "Heat-free shrink chamber",
     "Chamber compacting rejects and displaying the week's shrink score"),
    ("Sorting Relay Handle", "Relays bin access through a sorting quiz handle", "Two-stage bin handle",
     "Handle opens fully only after the stream choice is confirmed"),
    ("Organics Moisture Wick", "Wicks moisture to keep organics bins hygienic", "Capillary wick cartridge",
     "Cartridge drying the organics stream so sorting stays pleasant"),
    ("Street-Day Reminder Flag", "Raises a flag matching the collection stream", "Calendar-driven flag",
     "Bin flag showing which stream leaves the house today"),
    ("Child-Height Side Door", "Invites children to sort via a low side door", "Child-height bin door",
     "Small door with its own chime making children the household sorters"),
    ("Stream Capacity Forecast", "Forecasts bin overflow from fill sensors", "Fill-level forecast strip",
     "Strip predicting overflow days ahead so streams never merge"),
    ("Peel-Apart Packaging Station", "Splits composite packaging into streams", "Peel-and-split station",
     "Station with tools to separate multi-material packaging correctly"),
    ("Quiet Night Bin Glide", "Silences lids so night sorting is frictionless", "Damped glide hinges",
     "Hinges letting late disposals stay correct instead of rushed"),
]

MUSE_INPUTS = [
    "A compact rack of bins with big pictogram labels so my kids can sort without reading.",
    "The same pictogram bin rack, but sized for a shared flat with many housemates.",
    "Bright color-coded caddies, one color per waste stream.",
    "Stackable colored caddies in a compact version for small kitchens.",
    "Color caddies sized up for larger families or shared housing.",
    "A station where each stream has a differently shaped and colored opening.",
    "A compact version of the colored-aperture sorting station.",
    "A colored-aperture station big enough for a shared house.",
]

ACTIONS = [
    "Signals the correct stream at the moment of disposal",
    "Rewards sustained correct sorting",
    "Separates composite items into single streams",
    "Shrinks stored waste volume hygienically",
    "Adapts compartment sizes to the household mix",
    "Teaches children stream recognition",
    "Confirms the chosen stream before release",
    "Diverts reusable items before rejection",
    "Keeps organic storage odor-free",
    "Forecasts collection and overflow timing",
    "Projects guidance into the disposal zone",
    "Anchors sorting to existing routines",
    "Tracks accuracy without surveillance",
    "Relocates bins to the point of activity",
    "Dissolves packaging barriers to composting",
    "Gamifies the weekly waste review",
    "Silences and smooths the disposal action",
    "Reveals decomposition progress",
    "Color-codes items rather than bins",
    "Splits access by stream-specific doors",
]

OBJECTS = [
    "Shape-shifting funnel mouth",
    "Seed-paper reward tokens",
    "Peel-and-split tool station",
    "Heat-free shrink chamber",
    "Snap-together stream pods",
    "Child-height chime door",
    "Two-stage confirmation handle",
    "Stairwell swap shelf",
    "Capillary wick cartridge",
    "Fill-level forecast strip",
    "Micro projector ring",
    "Pressure-sensing floor mat",
    "Load-cell shelf bins",
    "Rail-mounted magnetic caddies",
    "Starch-film dissolving liners",
    "Magnetic family ledger board",
    "Damped glide hinges",
    "Transparent compost column",
    "Scented indicator strips",
    "Rotating compartment carousel",
]

_COPY_NOTES = ["", " (compact form)", " (shared-housing variant)"]


def _basis(i: int) -> list[float]:
    vec = [0.0] * DIM
    vec[i] = 1.0
    return vec


def _kill_vector(solution: int, spread: int) -> list[float]:
    """Cosine KILL_COS from basis vector *solution*, perturbed 120 degrees apart
    within the solution's dedicated 2-plane."""
    s = math.sqrt(1.0 - KILL_COS * KILL_COS)
    v1, v2 = 10 + 2 * solution, 11 + 2 * solution
    vec = [0.0] * DIM
    vec[solution] = KILL_COS
    if spread == 0:
        vec[v1] = s
    elif spread == 1:
        vec[v1] = -0.5 * s
        vec[v2] = s * math.sqrt(3.0) / 2.0
    else:
        vec[v1] = -0.5 * s
        vec[v2] = -s * math.sqrt(3.0) / 2.0
    return vec


def _position_vector(position: int) -> list[float]:
    if position < 21:
        return _kill_vector(position // 3, position % 3)
    return _basis(24 + (position - 21))


def _position_stem(position: int) -> tuple[str, str, str, str]:
    if position < 21:
        return KILL_STEMS[position]
    return CLEAN_STEMS[position - 21]


def _aoc_text(aoc: dict) -> str:
    return (
        f"Idea: {aoc['title']}. Action: {aoc['action']}. "
        f"Object: {aoc['object']}. Context: {aoc['context']}"
    )


def _aoc_variant(position: int, copy: int) -> dict:
    title, action, obj, context = _position_stem(position)
    note = _COPY_NOTES[copy]
    return {
        "title": f"{title}{note}",
        "action": action,
        "object": obj,
        "context": f"{context}{note}",
    }


def _round_layout() -> list[list[tuple[int, int]]]:
    """Per round: (position, copies). Round 1 holds 18 ideas (10 forge + 8
    muse); rounds 2-7 hold 10; round 8 holds 5."""
    rounds = [[(0, 3), (1, 3), (2, 3), (3, 3), (4, 3), (5, 3)]]
    p = 6
    for _ in range(6):
        rounds.append([(p, 3), (p + 1, 3), (p + 2, 2), (p + 3, 2)])
        p += 4
    rounds.append([(30, 3), (31, 2)])
    return rounds


def _score(i: int, j: int) -> int:
    return ((i * 7 + j * 3) % 10) + 1


@dataclass
class DemoScript:
    transcript: ScriptedTranscript
    embedder: ScriptedEmbedder
    config: SessionConfig
    muse_texts: list[str]
    removal_ids: list[str]
    expected_funnel: dict[str, int]


def build_ps1_script() -> DemoScript:
    transcript = ScriptedTranscript()
    embedder = ScriptedEmbedder(dimension=DIM, model_tag="demo-64")
    config = SessionConfig(
        max_rounds=8,
        scout_top_k=15,
        gates_enabled=True,
        auto_approve=False,
    )

    # Expand the layout into per-slot (position, copy) in creation order.
    layout = _round_layout()
    slots_by_round: list[list[tuple[int, int]]] = []
    for round_positions in layout:
        slots = []
        for position, copies in round_positions:
            slots.extend((position, copy) for copy in range(copies))
        slots_by_round.append(slots)

    idea_aocs: list[dict] = []  # in creation (id) order
    survivor_of_position: dict[int, int] = {}  # position -> 1-based idea number

    def register(aoc: dict, position: int) -> None:
        idea_aocs.append(aoc)
        embedder.script(_aoc_text(aoc), _position_vector(position))
        survivor_of_position.setdefault(position, len(idea_aocs))

    # 1. Scribe structures the problem.
    transcript.chat_response(PS1_AI3C)

    # 2. Generation rounds; round 1 is 10 forge slots then 8 muse slots.
    muse_texts = list(MUSE_INPUTS)
    for round_index, slots in enumerate(slots_by_round):
        if round_index == 0:
            forge_slots, muse_slots = slots[:10], slots[10:]
            split = 5
        else:
            forge_slots, muse_slots = slots, []
            split = (len(slots) + 1) // 2 if len(slots) < 10 else 5
        formulator = forge_slots[:split]
        explorer = forge_slots[split:]
        transcript.chat_response([_aoc_variant(p, c) for p, c in formulator])
        transcript.chat_response([_aoc_variant(p, c) for p, c in explorer])
        for position, copy in formulator + explorer:
            register(_aoc_variant(position, copy), position)
        if round_index == 0:
            muse_responses = [_aoc_variant(p, c) for p, c in muse_slots]
            for (position, copy), response in zip(muse_slots, muse_responses):
                transcript.chat_response(response)
                register(response, position)

        if round_index == 0:
            # 3. First assessment: the librarian searches once.
            results = [
                {"title": t, "url": url, "snippet": f"{action}: {context}"}
                for (t, action, obj, context, url) in LITERATURE
            ]
            transcript.search_response(results)
            entries = [
                {"title": t, "action": a, "object": o, "context": c, "source_url": url}
                for (t, a, o, c, url) in LITERATURE
            ]
            transcript.chat_response(entries)
            for index, entry in enumerate(entries):
                embedder.script(_aoc_text(entry), _basis(index))

    # Globally novel survivors: the first copy of each clean position.
    gn_numbers = sorted(survivor_of_position[p] for p in range(21, 32))
    gn_ids = [f"idea-{n:04d}" for n in gn_numbers]

    # 4. Divergence: mint lists, then one scout row per action.
    transcript.chat_response({"actions": ACTIONS, "objects": OBJECTS})
    for i in range(len(ACTIONS)):
        row = [
            {
                "object_index": j,
                "score": _score(i, j),
                "rationale": f"Pairing '{ACTIONS[i]}' with '{OBJECTS[j]}' for household sorting",
            }
            for j in range(len(OBJECTS))
        ]
        transcript.chat_response(row)

    # 5. Refinement: navigator returns 15 candidates; the first three share a
    # position, so the internal pass keeps 13.
    candidates = []
    for k in range(15):
        if k < 3:
            title, action, obj, context = NAV_STEMS[0]
            note = _COPY_NOTES[k]
            aoc = {
                "title": f"{title}{note}",
                "action": action,
                "object": obj,
                "context": f"{context}{note}",
            }
            position_vec = _basis(35)
        else:
            title, action, obj, context = NAV_STEMS[k - 2]
            aoc = {"title": title, "action": action, "object": obj, "context": context}
            position_vec = _basis(35 + (k - 2))
        candidates.append(aoc)
        embedder.script(_aoc_text(aoc), position_vec)
    transcript.chat_response(candidates)

    navigator_numbers = [84 + k for k in range(13)]
    nav_ids = [f"idea-{n:04d}" for n in navigator_numbers]

    # 6. Sentinel keeps all 24 candidates.
    sentinel_pool = sorted(gn_ids + nav_ids)
    verdicts = [
        {"idea_id": idea_id, "verdict": "keep", "reason": "directly serves the sorting goal"}
        for idea_id in sentinel_pool
    ]
    transcript.chat_response(verdicts)

    # 7. The designer prunes two curated ideas before conceptualization.
    removal_ids = [gn_ids[1], nav_ids[2]]
    conceptualized = [i for i in sentinel_pool if i not in removal_ids]

    # 8. Director expands the remaining 22; Leo renders 20 (two provider faults).
    for idea_id in conceptualized:
        transcript.chat_response(
            {
                "principle": f"Working principle derived from {idea_id}: make the correct "
                "stream the path of least resistance at disposal time",
                "features": [
                    "Zero-step stream guidance",
                    "Tool-free installation in existing kitchens",
                    "Feedback that sustains family motivation",
                ],
                "implementation": [
                    "Mold the housing from recycled polypropylene",
                    "Integrate the guidance module with a one-year battery",
                    "Ship with a calibration card for local stream rules",
                ],
                "characteristics": [
                    "Effortless correct disposal",
                    "Child-friendly operation",
                    "Hygienic wipe-clean surfaces",
                ],
            }
        )
    for render_index in range(len(conceptualized)):
        if render_index in (4, 16):
            transcript.image_fault("fatal")
        else:
            transcript.image_response()

    expected_funnel = {
        "muse": 8,
        "forge": 75,
        "gatekeeper": 32,
        "librarian": 10,
        "challenger": 11,
        "mint": 20,
        "scout": 400,
        "navigator": 13,
        "sentinel": 24,
        "director": 22,
        "leo": 20,
        "human_overrides": 2,
    }
    return DemoScript(
        transcript=transcript,
        embedder=embedder,
        config=config,
        muse_texts=muse_texts,
        removal_ids=removal_ids,
        expected_funnel=expected_funnel,
    )


def run_ps1(store: Optional[SessionStore] = None, seed: int = 1) -> tuple[Engine, object]:
    """Drive the bundled demo end to end; returns the engine and the Done session."""
    script = build_ps1_script()
    engine = Engine(
        provider_factory=lambda s: scripted_provider_set(
            script.transcript, embedder=script.embedder, rng_seed=s.seed
        ),
        store=store,
    )
    session = engine.create_session(PS1_PROBLEM, script.config, seed)
    sid = session.id
    approval = HumanApproval(approved_by="demo-designer", note="demo session")

    engine.submit_problem(sid)
    engine.advance(sid, approval)  # Definition -> Generation round 1
    for text in script.muse_texts:
        engine.submit_idea(sid, text)
    for round_number in range(1, 9):
        engine.advance(sid)  # Generation -> Assessment
        if round_number < 8:
            engine.advance(sid)  # loop back to Generation
    engine.advance(sid, approval)  # Assessment -> Divergence
    engine.advance(sid)  # Divergence -> Refinement
    for idea_id in script.removal_ids:
        engine.override(
            sid,
            Override(
                kind="remove_idea",
                idea_id=idea_id,
                reason="designer pruned before conceptualization",
            ),
        )
    engine.advance(sid, approval)  # Refinement -> Conceptualization
    engine.advance(sid)  # -> Done
    script.transcript.assert_consumed()
    return engine, engine.get(sid)


def expected_funnel() -> dict[str, int]:
    return dict(build_ps1_script().expected_funnel)


if __name__ == "__main__":  # pragma: no cover
    _, session = run_ps1()
    from .persistence import funnel_counts

    print(json.dumps(funnel_counts(session), indent=2))
