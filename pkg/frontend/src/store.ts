// Single mutable UI state record with change notification. All mutation
// goes through methods so invariants (trim bounds, disabled-on-disconnect)
// hold everywhere the state is read.

import { clampRegion, fullRegion, type TrimRegion } from './trim.js';

export type ConnectionStatus = 'connecting' | 'connected' | 'disconnected';

export type UiState = {
	p1: number;
	p2: number;
	p3: number;
	range: number;
	category: number;
	status: ConnectionStatus;
	waveform: number[] | null;
	sampleRate: number;
	trim: TrimRegion;
	lastReplyId: number | null;
};

export type Listener = (state: UiState) => void;

export class Store {
	private state: UiState = {
		p1: 0,
		p2: 0,
		p3: 0,
		range: 2,
		category: 0,
		status: 'connecting',
		waveform: null,
		sampleRate: 22050,
		trim: { start: 0, end: 0 },
		lastReplyId: null
	};
	private listeners: Listener[] = [];

	get(): UiState {
		return this.state;
	}

	subscribe(fn: Listener): () => void {
		this.listeners.push(fn);
		fn(this.state);
		return () => {
			this.listeners = this.listeners.filter((l) => l !== fn);
		};
	}

	private emit(): void {
		for (const fn of this.listeners) fn(this.state);
	}

	/** Raw pad/knob positions in [-1, 1]; the range multiplier scales them on send. */
	setControls(p1: number, p2: number, p3: number): void {
		this.state = { ...this.state, p1, p2, p3 };
		this.emit();
	}

	setRange(range: number): void {
		this.state = { ...this.state, range };
		this.emit();
	}

	setCategory(category: number): void {
		this.state = { ...this.state, category };
		this.emit();
	}

	setStatus(status: ConnectionStatus): void {
		this.state = { ...this.state, status };
		this.emit();
	}

	get controlsEnabled(): boolean {
		return this.state.status === 'connected';
	}

	/** Scaled values actually sent to the server. */
	outgoing(): { p1: number; p2: number; p3: number; cat: number } {
		const s = this.state;
		return { p1: s.p1 * s.range, p2: s.p2 * s.range, p3: s.p3 * s.range, cat: s.category };
	}

	setWaveform(samples: number[], sampleRate: number, replyId: number | null): void {
		this.state = {
			...this.state,
			waveform: samples,
			sampleRate,
			trim: fullRegion(samples.length),
			lastReplyId: replyId
		};
		this.emit();
	}

	setTrim(region: TrimRegion): void {
		const len = this.state.waveform ? this.state.waveform.length : 0;
		this.state = { ...this.state, trim: clampRegion(region, len) };
		this.emit();
	}
}
