#!/usr/bin/env python3
"""Regenerates the bundled toy fixture in data/toy/.

Five topical word families plus function words. Each word vector is its
family center plus small Gaussian noise; function words sit near a shared
center with a wider spread. Counts make function words frequent and topical
words rare. The output is fully determined by the fixed seed.
"""
import os
import random

FAMILIES = {
    "animals": "cat dog horse bird fish cow sheep mouse lion tiger puppy kitten".split(),
    "food": "bread cheese apple pizza soup rice pasta cake salad coffee tea butter".split(),
    "weather": "rain snow sun wind storm cloud cold hot fog thunder sunny weather".split(),
    "sports": "football tennis soccer ball team game player goal match coach score race".split(),
    "music": "guitar piano song music band singer drum concert melody violin album tune".split(),
}
VERBS = {
    "animals": "chases barks".split(),
    "food": "eats bakes drinks cooks".split(),
    "weather": "falls blows".split(),
    "sports": "plays wins kicks".split(),
    "music": "sings listens".split(),
}
FUNCTION = "the a an is are was and of to in on with at it this that his her they he she".split()

PAIRS = [
    (4.6, "The cat chases a mouse.", "A kitten chases the mouse."),
    (4.0, "The dog runs in the rain.", "A puppy runs in the storm."),
    (3.8, "She bakes bread and cake.", "He bakes a cake with butter."),
    (4.2, "They play football with the team.", "The team plays soccer."),
    (2.8, "He plays the guitar in a band.", "The singer sings a song."),
    (0.2, "The cat eats fish.", "The team wins the match."),
    (4.4, "Snow falls in the cold wind.", "The cold storm brings snow."),
    (3.5, "She drinks tea and coffee.", "He drinks coffee."),
    (3.9, "The lion and the tiger.", "A tiger chases a lion."),
    (0.4, "The piano concert was long.", "It is a sunny day with fog."),
    (1.0, "The horse eats an apple.", "The coach drinks coffee at the match."),
    (4.8, "The band plays a song at the concert.", "A band plays songs at a concert."),
    (0.0, "Thunder and rain.", "The violin album."),
    (2.2, "The player kicks the ball in the rain.", "The storm stops the game."),
    (3.1, "She cooks rice and soup.", "He cooks pasta and salad."),
    (0.6, "The sheep and the cow.", "The singer and the drum."),
    (4.5, "Hot sun and no cloud.", "A sunny and hot day."),
    (1.4, "The bird sings a tune.", "The melody of the violin."),
    (3.6, "The coach and the player win the race.", "The team wins the match and the race."),
    (0.3, "Pizza with cheese.", "Tennis with the coach."),
]

DIM = 8


def main():
    rng = random.Random(20240501)
    out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "toy")
    os.makedirs(out_dir, exist_ok=True)

    centers = {}
    for i, fam in enumerate(FAMILIES):
        c = [0.0] * DIM
        c[i] = 3.0
        c[(i + 5) % DIM] = 1.0
        centers[fam] = c
    function_center = [0.6] * DIM

    rows = []
    counts = []
    for fam, words in FAMILIES.items():
        for w in words + VERBS[fam]:
            v = [x + rng.gauss(0.0, 0.35) for x in centers[fam]]
            rows.append((w, v))
            counts.append((w, rng.randint(20, 400)))
    for w in FUNCTION:
        v = [x + rng.gauss(0.0, 0.6) for x in function_center]
        rows.append((w, v))
        counts.append((w, rng.randint(20000, 90000)))

    assert len(rows) <= 100, len(rows)
    with open(os.path.join(out_dir, "vectors.txt"), "w") as f:
        for w, v in rows:
            f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
    with open(os.path.join(out_dir, "freq.txt"), "w") as f:
        for w, c in counts:
            f.write(f"{w}\t{c}\n")
    with open(os.path.join(out_dir, "sts.tsv"), "w") as f:
        for score, a, b in PAIRS:
            f.write(f"{score}\t{a}\t{b}\n")
    with open(os.path.join(out_dir, "sentences.txt"), "w") as f:
        for _, a, b in PAIRS:
            f.write(a + "\n" + b + "\n")


if __name__ == "__main__":
    main()
