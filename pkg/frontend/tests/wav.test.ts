import { describe, expect, it } from 'vitest';
import { decodeWavPcm16, encodeWavPcm16 } from '../src/wav.js';

function randomSamples(n: number, seed = 1234): number[] {
	// deterministic LCG so the round-trip bound is reproducible
	let s = seed;
	return Array.from({ length: n }, () => {
		s = (s * 1103515245 + 12345) % 2147483648;
		return (s / 2147483648) * 2 - 1;
	});
}

describe('wav codec', () => {
	it('export then reload stays within 16-bit quantization', () => {
		const samples = randomSamples(600);
		const buf = encodeWavPcm16(samples, 22050);
		const back = decodeWavPcm16(buf);
		expect(back.sampleRate).toBe(22050);
		expect(back.samples.length).toBe(samples.length);
		let worst = 0;
		for (let i = 0; i < samples.length; i++) {
			worst = Math.max(worst, Math.abs(back.samples[i] - samples[i]));
		}
		expect(worst).toBeLessThanOrEqual(1 / 32768);
	});

	it('clips full-scale peaks instead of wrapping', () => {
		const buf = encodeWavPcm16([1.0, -1.0, 2.0, -2.0], 22050);
		const back = decodeWavPcm16(buf).samples;
		expect(back[0]).toBeCloseTo(32767 / 32768, 10);
		expect(back[1]).toBe(-1);
		expect(back[2]).toBeCloseTo(32767 / 32768, 10);
		expect(back[3]).toBe(-1);
	});

	it('rejects non-wav buffers', () => {
		expect(() => decodeWavPcm16(new ArrayBuffer(64))).toThrow();
	});

	it('header fields match mono pcm16 at the given rate', () => {
		const view = new DataView(encodeWavPcm16(randomSamples(32), 22050));
		expect(view.getUint16(22, true)).toBe(1); // channels
		expect(view.getUint32(24, true)).toBe(22050); // rate
		expect(view.getUint16(34, true)).toBe(16); // bit depth
	});
});
