"""Hand-built mutations of one valid alert line, with the byte offset where each breaks."""

LINE = ("01/01-00:00:01.000000 [**] [1:1000001:0] ICMP flood [**] [Priority: 2] {ICMP} "
        "10.0.0.5 -> 10.0.0.9")

# (mutated line, byte offset of first divergence); offsets counted by hand against LINE
MALFORMED = [
    (LINE.replace("10.0.0.5 -> ", "10.0.0.5 "), 87),
    ("13" + LINE[2:], 0),
    (LINE.replace("-00:", "-0a:", 1), 7),
    (LINE.replace(" [**] [1:", " [1:"), 23),
    (LINE.replace("[Priority: 2]", "[Priority: x]"), 68),
    (LINE.replace("10.0.0.5", "10.0.0.256"), 85),
    (LINE + " extra", 98),
    (LINE.replace("[1:1000001:0]", "[1:01000001:0]"), 31),
    (LINE.replace(".000000", ".00000"), 20),
    (LINE.replace("{ICMP}", "{ICMP"), 97),
    (LINE.replace("ICMP flood", ""), 41),
    ("02/30" + LINE[5:], 3),
    # multi-byte message shifts the byte offset by one past the character offset
    (LINE.replace("flood", "flöod").replace("10.0.0.5 -> ", "10.0.0.5 "), 88),
]
