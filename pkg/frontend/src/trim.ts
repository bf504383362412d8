// Trim-region arithmetic for the waveform visualizer. Regions are
// half-open sample ranges [start, end) within a clip of totalLen samples.

export type TrimRegion = {
	start: number;
	end: number;
};

export function fullRegion(totalLen: number): TrimRegion {
	return { start: 0, end: totalLen };
}

/** Clamp and order a candidate region so it always lies within the clip. */
export function clampRegion(region: TrimRegion, totalLen: number): TrimRegion {
	let start = Math.round(Math.min(region.start, region.end));
	let end = Math.round(Math.max(region.start, region.end));
	start = Math.max(0, Math.min(start, totalLen));
	end = Math.max(0, Math.min(end, totalLen));
	return { start, end };
}

export function regionLength(region: TrimRegion): number {
	return Math.max(0, region.end - region.start);
}

export function isPlayable(region: TrimRegion): boolean {
	return regionLength(region) > 0;
}

/** Playback duration in seconds for the trimmed part. */
export function regionSeconds(region: TrimRegion, sampleRate: number): number {
	return regionLength(region) / sampleRate;
}

export function sliceSamples(samples: Float64Array | number[], region: TrimRegion): number[] {
	const r = clampRegion(region, samples.length);
	return Array.from(samples).slice(r.start, r.end);
}
