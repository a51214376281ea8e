import numpy as np

from specstyle import AudioBuffer, LabeledClip, write_wav

# Pass/fail lines recorded by tests/test_acceptance.py and echoed into the
# terminal summary so the criterion verdicts survive output capturing.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def tone(freq, sr=8000, dur=1.0, amp=0.5, phase=0.0):
    t = np.arange(int(sr * dur)) / sr
    return AudioBuffer(amp * np.sin(2.0 * np.pi * freq * t + phase), sr)


def noise_clip(sr=8000, dur=1.0, amp=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return AudioBuffer(rng.uniform(-amp, amp, int(sr * dur)), sr)


def chirp(f0, f1, sr=8000, dur=1.0, amp=0.5):
    t = np.arange(int(sr * dur)) / sr
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * dur))
    return AudioBuffer(amp * np.sin(phase), sr)


def square(freq, sr=8000, dur=1.0, amp=0.4):
    t = np.arange(int(sr * dur)) / sr
    return AudioBuffer(amp * np.sign(np.sin(2.0 * np.pi * freq * t)), sr)


def write_tone(path, freq, sr=8000, dur=1.0, amp=0.5):
    write_wav(path, tone(freq, sr=sr, dur=dur, amp=amp))
    return path


def toy_corpus(sr=4000, dur=1.0, per_class=10, seed=0):
    """Four easily separable synthetic classes: sine, square, noise, chirp."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(sr * dur)) / sr
    clips = []
    for _ in range(per_class):
        f = rng.uniform(200, 600)
        samples = 0.5 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        clips.append(LabeledClip(AudioBuffer(samples, sr), 0))
    for _ in range(per_class):
        f = rng.uniform(200, 600)
        clips.append(LabeledClip(AudioBuffer(0.4 * np.sign(np.sin(2 * np.pi * f * t)), sr), 1))
    for _ in range(per_class):
        clips.append(LabeledClip(AudioBuffer(rng.uniform(-0.5, 0.5, len(t)), sr), 2))
    for _ in range(per_class):
        f0, f1 = rng.uniform(150, 300), rng.uniform(1200, 1800)
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * dur))
        clips.append(LabeledClip(AudioBuffer(0.5 * np.sin(phase), sr), 3))
    return clips
