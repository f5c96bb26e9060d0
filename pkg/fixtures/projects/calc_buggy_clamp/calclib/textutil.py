"""Text helpers."""


def slugify(text):
    """Lowercase and hyphen-join the words of text.

    slugify(" Hello  World ") == "hello-world". Characters other than
    letters, digits, spaces, hyphens, and underscores are dropped;
    hyphens and underscores act as word separators.
    """
    kept = []
    for ch in text.lower():
        if ch.isalnum():
            kept.append(ch)
        elif ch in " -_":
            kept.append(" ")
    return "-".join("".join(kept).split())


def wrap_words(words, width):
    """Greedily pack words into lines of at most width characters.

    A word longer than width still gets its own line.
    """
    lines = []
    current = ""
    for word in words:
        if not current:
            current = word
        elif len(current) + 1 + len(word) <= width:
            current = current + " " + word
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines
